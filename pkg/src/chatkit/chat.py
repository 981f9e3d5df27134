"""CHAT transcript document model: parsing, serialization, validation.

Covers the working subset of CHAT this toolkit needs: headers, main speaker
lines with terminators and time bullets, dependent tiers (%mor, %gra, %wor,
%pho and friends), `[: target]` replacements, parenthesized letter omissions,
underscore compounds, `&`-prefixed fillers, retrace markers, and repetition
codes.  Every other bracket code is carried through opaquely so that
serialization reproduces it.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

from .diagnostics import Diagnostic

BULLET = "\x15"  # NAK byte delimiting time bullets, per CLAN convention
TERMINATORS = (".", "?", "!")
WRAP_COLUMN = 80

_SPEAKER_RE = re.compile(r"^\*([A-Z0-9]{3}):[ \t]*(.*)$")
_TIER_RE = re.compile(r"^(%[a-zA-Z][a-zA-Z0-9]*):[ \t]*(.*)$")
_HEADER_RE = re.compile(r"^@([^:]+)(?::[ \t]*(.*))?$")
_BULLET_RE = re.compile(rf"\s*{BULLET}(\d+)_(\d+){BULLET}\s*$")
_REPETITION_RE = re.compile(r"\[x\s+(\S+)\]")
_REPLACEMENT_RE = re.compile(r"\[:\s+(.+)\]")
_RETRACE_CODES = ("[/]", "[//]", "[///]")
_PAUSE_RE = re.compile(r"\(\.+\)")
_OMISSION_RE = re.compile(r"\((\w+)\)", re.UNICODE)


class ChatError(Exception):
    """Base class for CHAT parsing failures."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class MalformedHeader(ChatError):
    """The document lacks @Begin or @Participants."""


class OrphanTier(ChatError):
    """A dependent tier appeared before any main line."""


class BadTerminator(ChatError):
    """A main line does not end in one of the recognized terminators."""


class TokenKind(str, enum.Enum):
    WORD = "word"
    FILLER = "filler"
    RETRACE = "retrace-marked"
    PUNCT = "punctuation-internal"


@dataclass(frozen=True)
class TokenCode:
    """A postfix bracket code attached to the last token of its scope.

    ``scope`` counts how many consecutive tokens (ending with the carrier)
    the code covers; a scope above one serializes as an angle-bracket group.
    An empty ``code`` records a bare ``<...>`` group with no trailing code.
    """

    code: str
    scope: int = 1


@dataclass(frozen=True)
class MainToken:
    """One whitespace-delimited item on a main speaker line.

    ``surface`` holds the complete orthographic form with omission parens
    stripped; ``omitted_letters`` are the 0-based positions in ``surface``
    that were parenthesized (unspoken).  ``text`` renders the canonical
    transcript spelling, ``spoken`` what was actually said.
    """

    surface: str
    kind: TokenKind = TokenKind.WORD
    replacement: str | None = None
    omitted_letters: tuple[int, ...] = ()
    codes: tuple[TokenCode, ...] = ()

    def __post_init__(self):
        if not self.surface or any(ch.isspace() for ch in self.surface):
            raise ValueError(f"bad token surface: {self.surface!r}")
        for pos in self.omitted_letters:
            if not 0 <= pos < len(self.surface):
                raise ValueError(f"omission position {pos} outside {self.surface!r}")

    @property
    def compound_parts(self) -> tuple[str, ...]:
        parts = self.surface.split("_")
        if len(parts) > 1 and all(parts):
            return tuple(parts)
        return (self.surface,)

    @property
    def text(self) -> str:
        """Transcript rendering with omission parens reinserted."""
        if not self.omitted_letters:
            return self.surface
        omitted = set(self.omitted_letters)
        out = []
        inside = False
        for i, ch in enumerate(self.surface):
            if i in omitted and not inside:
                out.append("(")
                inside = True
            elif i not in omitted and inside:
                out.append(")")
                inside = False
            out.append(ch)
        if inside:
            out.append(")")
        return "".join(out)

    @property
    def spoken(self) -> str:
        """The form as pronounced: omitted letters dropped."""
        if not self.omitted_letters:
            return self.surface
        omitted = set(self.omitted_letters)
        return "".join(ch for i, ch in enumerate(self.surface) if i not in omitted)


@dataclass(frozen=True)
class TimeInterval:
    start_ms: int
    end_ms: int

    def __post_init__(self):
        if self.start_ms < 0 or self.start_ms > self.end_ms:
            raise ValueError(f"bad interval [{self.start_ms}, {self.end_ms}]")


@dataclass(frozen=True)
class Participant:
    code: str
    role: str
    language: str = ""

    def __post_init__(self):
        if len(self.code) != 3 or not self.code.isalnum() or self.code != self.code.upper():
            raise ValueError(f"bad speaker code: {self.code!r}")


@dataclass(frozen=True)
class Utterance:
    speaker_code: str
    tokens: tuple[MainToken, ...]
    terminator: str
    tiers: tuple[tuple[str, str], ...] = ()
    time: TimeInterval | None = None
    line: int | None = field(default=None, compare=False)

    def tier(self, name: str) -> str | None:
        for tier_name, content in self.tiers:
            if tier_name == name:
                return content
        return None

    def with_tier(self, name: str, content: str) -> "Utterance":
        """Return a copy with the named tier replaced or appended."""
        if self.tier(name) is None:
            return replace(self, tiers=self.tiers + ((name, content),))
        new = tuple((n, content if n == name else c) for n, c in self.tiers)
        return replace(self, tiers=new)

    def with_time(self, time: TimeInterval | None) -> "Utterance":
        return replace(self, time=time)

    def with_tokens(self, tokens: tuple[MainToken, ...]) -> "Utterance":
        return replace(self, tokens=tokens)


@dataclass(frozen=True)
class Transcript:
    headers: tuple[tuple[str, str], ...]
    utterances: tuple[Utterance, ...]
    trailing_headers: tuple[tuple[str, str], ...] = ()

    def header(self, name: str) -> str | None:
        for header_name, value in self.headers:
            if header_name == name:
                return value
        return None

    @property
    def participants(self) -> tuple[Participant, ...]:
        """Participants from @Participants, with languages merged in from @ID."""
        value = self.header("Participants")
        if value is None:
            return ()
        languages: dict[str, str] = {}
        for name, id_value in self.headers:
            if name != "ID":
                continue
            fields = id_value.split("|")
            if len(fields) >= 3:
                languages[fields[2]] = fields[0]
        out = []
        for chunk in value.split(","):
            parts = chunk.split()
            if not parts:
                continue
            code = parts[0]
            role = parts[-1] if len(parts) > 1 else ""
            out.append(Participant(code=code, role=role, language=languages.get(code, "")))
        return tuple(out)

    @property
    def languages(self) -> tuple[str, ...]:
        value = self.header("Languages")
        if not value:
            return ()
        return tuple(code.strip() for code in value.replace(",", " ").split() if code.strip())

    def with_utterances(self, utterances: tuple[Utterance, ...]) -> "Transcript":
        return replace(self, utterances=utterances)


def mor_eligible(u: Utterance) -> list[MainToken]:
    """Tokens that receive a %mor group: words and internal punctuation.

    Fillers, retraced material, pause marks, and omitted-word markers are
    skipped, following CLAN convention.
    """
    return [t for t in u.tokens if t.kind in (TokenKind.WORD, TokenKind.PUNCT)]


def word_tokens(u: Utterance) -> list[MainToken]:
    """Tokens counted as words by the sample measures."""
    return [t for t in u.tokens if t.kind is TokenKind.WORD]


# ---------------------------------------------------------------------------
# parsing


def _classify(piece: str) -> TokenKind:
    if piece == ",":
        return TokenKind.PUNCT
    if piece.startswith("&"):
        return TokenKind.FILLER
    if _PAUSE_RE.fullmatch(piece):
        return TokenKind.FILLER
    if piece == "0" or (piece.startswith("0") and piece[1:].isalpha()):
        return TokenKind.FILLER
    return TokenKind.WORD


def parse_token(piece: str) -> MainToken:
    """Build a MainToken from one whitespace-free transcript item."""
    kind = _classify(piece)
    if kind is TokenKind.WORD and "(" in piece and _OMISSION_RE.search(piece):
        surface_chars: list[str] = []
        omitted: list[int] = []
        cursor = 0
        for m in _OMISSION_RE.finditer(piece):
            surface_chars.extend(piece[cursor : m.start()])
            for ch in m.group(1):
                omitted.append(len(surface_chars))
                surface_chars.append(ch)
            cursor = m.end()
        surface_chars.extend(piece[cursor:])
        return MainToken("".join(surface_chars), kind=kind, omitted_letters=tuple(omitted))
    return MainToken(piece, kind=kind)


def _mark_retraced(tokens: list[MainToken], start: int, end: int) -> None:
    for i in range(start, end):
        if tokens[i].kind is TokenKind.WORD:
            tokens[i] = replace(tokens[i], kind=TokenKind.RETRACE)


def _attach_code(
    tokens: list[MainToken], code: str, group: tuple[int, int] | None, line_no: int | None
) -> None:
    if not tokens:
        raise ChatError(f"bracket code {code!r} has no preceding token", line_no)
    start, end = group if group is not None else (len(tokens) - 1, len(tokens))
    scope = end - start
    m = _REPLACEMENT_RE.fullmatch(code)
    if m:
        tokens[-1] = replace(tokens[-1], replacement=m.group(1))
        return
    if code in _RETRACE_CODES:
        _mark_retraced(tokens, start, end)
    tokens[end - 1] = replace(
        tokens[end - 1], codes=tokens[end - 1].codes + (TokenCode(code, scope),)
    )


def _parse_token_stream(raw: list[str], line_no: int | None) -> tuple[MainToken, ...]:
    tokens: list[MainToken] = []
    group_start: int | None = None
    closed_group: tuple[int, int] | None = None

    def flush_bare_group():
        nonlocal closed_group
        if closed_group is not None:
            start, end = closed_group
            tokens[end - 1] = replace(
                tokens[end - 1], codes=tokens[end - 1].codes + (TokenCode("", end - start),)
            )
            closed_group = None

    i = 0
    while i < len(raw):
        piece = raw[i]
        if piece.startswith("["):
            parts = [piece]
            while not parts[-1].endswith("]") and i + 1 < len(raw):
                i += 1
                parts.append(raw[i])
            _attach_code(tokens, " ".join(parts), closed_group, line_no)
            closed_group = None
            i += 1
            continue
        flush_bare_group()
        if piece.startswith("<") and len(piece) > 1:
            piece = piece[1:]
            group_start = len(tokens)
        closes = piece.endswith(">") and len(piece) > 1
        if closes:
            piece = piece[:-1]
        tokens.append(parse_token(piece))
        if closes:
            closed_group = (group_start if group_start is not None else len(tokens) - 1, len(tokens))
            group_start = None
        i += 1
    flush_bare_group()
    return tuple(tokens)


def _parse_main_line(content: str, line_no: int) -> Utterance:
    m = _SPEAKER_RE.match(content)
    if m is None:
        raise ChatError(f"unparseable main line: {content!r}", line_no)
    speaker, rest = m.group(1), m.group(2)
    time = None
    bullet = _BULLET_RE.search(rest)
    if bullet:
        time = TimeInterval(int(bullet.group(1)), int(bullet.group(2)))
        rest = rest[: bullet.start()]
    raw = rest.split()
    if not raw or raw[-1] not in TERMINATORS:
        raise BadTerminator(f"main line lacks a terminator: {content!r}", line_no)
    tokens = _parse_token_stream(raw[:-1], line_no)
    return Utterance(speaker, tokens, raw[-1], time=time, line=line_no)


def _fold_lines(text: str) -> list[tuple[int, str]]:
    """Join tab-indented continuation lines onto their logical line."""
    folded: list[tuple[int, str]] = []
    for number, line in enumerate(text.splitlines(), start=1):
        if line.startswith("\t") and folded:
            start, prev = folded[-1]
            folded[-1] = (start, prev + " " + line.strip())
        elif line.strip():
            folded.append((number, line.rstrip("\r")))
    return folded


def parse_chat(text: str) -> Transcript:
    """Parse a CHAT document into a Transcript.

    Raises MalformedHeader, OrphanTier, or BadTerminator on documents
    outside the supported shape; all bracket codes the toolkit does not
    interpret are preserved opaquely on their tokens.
    """
    if text.startswith("﻿"):
        text = text[1:]
    headers: list[tuple[str, str]] = []
    trailing: list[tuple[str, str]] = []
    utterances: list[Utterance] = []
    for line_no, line in _fold_lines(text):
        if line.startswith("@"):
            m = _HEADER_RE.match(line)
            if m is None:
                raise MalformedHeader(f"unparseable header: {line!r}", line_no)
            record = (m.group(1), m.group(2) or "")
            # headers seen after the first turn are kept with the trailing block
            (trailing if utterances else headers).append(record)
        elif line.startswith("*"):
            utterances.append(_parse_main_line(line, line_no))
        elif line.startswith("%"):
            m = _TIER_RE.match(line)
            if m is None:
                raise ChatError(f"unparseable tier line: {line!r}", line_no)
            if not utterances:
                raise OrphanTier(f"dependent tier before any main line: {line!r}", line_no)
            name, content = m.group(1), m.group(2)
            last = utterances[-1]
            if last.tier(name) is not None:
                raise ChatError(f"duplicate tier {name} on one utterance", line_no)
            utterances[-1] = last.with_tier(name, content)
        else:
            raise ChatError(f"unrecognized line: {line!r}", line_no)
    names = [name for name, _ in headers]
    if "Begin" not in names:
        raise MalformedHeader("missing @Begin")
    if "Participants" not in names:
        raise MalformedHeader("missing @Participants")
    return Transcript(tuple(headers), tuple(utterances), tuple(trailing))


# ---------------------------------------------------------------------------
# serialization


def _render_tokens(tokens: tuple[MainToken, ...]) -> list[str]:
    chunks: list[list[str]] = []
    for tok in tokens:
        chunk = [tok.text]
        if tok.replacement is not None:
            chunk.append(f"[: {tok.replacement}]")
        scoped: list[TokenCode] = []
        for code in tok.codes:
            if code.scope <= 1 and code.code:
                chunk.append(code.code)
            else:
                scoped.append(code)
        chunks.append(chunk)
        for code in scoped:
            span = min(code.scope, len(chunks))
            first = chunks[len(chunks) - span]
            first[0] = "<" + first[0]
            chunks[-1][-1] = chunks[-1][-1] + ">"
            if code.code:
                chunks[-1].append(code.code)
    return [piece for chunk in chunks for piece in chunk]


def _render_main(u: Utterance) -> str:
    pieces = _render_tokens(u.tokens)
    pieces.append(u.terminator)
    line = " ".join(pieces)
    if u.time is not None:
        line += f" {BULLET}{u.time.start_ms}_{u.time.end_ms}{BULLET}"
    return line


def _wrap(line: str, width: int = WRAP_COLUMN) -> str:
    if len(line) <= width:
        return line
    words = line.split(" ")
    out: list[str] = []
    current = words[0]
    for word in words[1:]:
        if len(current) + 1 + len(word) > width:
            out.append(current)
            current = "\t" + word
        else:
            current += " " + word
    out.append(current)
    return "\n".join(out)


def _header_line(name: str, value: str) -> str:
    return f"@{name}:\t{value}" if value else f"@{name}"


def serialize_chat(t: Transcript) -> str:
    """Render a Transcript in canonical CHAT form (LF, tab-delimited, wrapped)."""
    lines = [_header_line(name, value) for name, value in t.headers]
    for u in t.utterances:
        lines.append(_wrap(f"*{u.speaker_code}:\t{_render_main(u)}"))
        for name, content in u.tiers:
            lines.append(_wrap(f"{name}:\t{content}"))
    lines.extend(_header_line(name, value) for name, value in t.trailing_headers)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# validation


def _count_mor_elements(content: str) -> tuple[int, int]:
    """Return (group count, syntactic word count) of a %mor tier text."""
    elements = content.split()
    if elements and elements[-1] in TERMINATORS:
        elements = elements[:-1]
    groups = len(elements)
    words = sum(1 + element.count("~") for element in elements)
    return groups, words


def validate(t: Transcript, file: str | None = None) -> list[Diagnostic]:
    """Run the Chatter-style checks this toolkit relies on.

    Returns an empty list when the transcript is clean; diagnostics never
    raise.
    """
    diags: list[Diagnostic] = []

    def add(code: str, message: str, line: int | None = None):
        diags.append(Diagnostic(code=code, message=message, file=file, line=line))

    try:
        known = {p.code for p in t.participants}
    except ValueError:
        known = set()
        add("bad-participants", "unparseable @Participants header")
    if t.header("Begin") is None:
        add("missing-begin", "transcript lacks @Begin")
    if all(name != "End" for name, _ in t.trailing_headers):
        add("missing-end", "transcript lacks @End")
    for u in t.utterances:
        if u.speaker_code not in known:
            add("unknown-speaker", f"speaker {u.speaker_code} not in @Participants", u.line)
        if u.terminator not in TERMINATORS:
            add("bad-terminator", f"unrecognized terminator {u.terminator!r}", u.line)
        for tok in u.tokens:
            for code in tok.codes:
                if _REPETITION_RE.fullmatch(code.code):
                    add("repetition-code", f"repetition code present: {code.code}", u.line)
            if tok.kind is TokenKind.WORD and "+" in tok.surface.strip("+"):
                add("plus-compound", f"plus-sign compound: {tok.surface}", u.line)
        mor = u.tier("%mor")
        eligible = len(mor_eligible(u))
        if mor is not None:
            groups, words = _count_mor_elements(mor)
            if groups != eligible:
                add(
                    "mor-misaligned",
                    f"%mor has {groups} groups for {eligible} eligible tokens",
                    u.line,
                )
            gra = u.tier("%gra")
            if gra is not None and len(gra.split()) != words + 1:
                add(
                    "gra-misaligned",
                    f"%gra has {len(gra.split())} entries for {words + 1} syntactic positions",
                    u.line,
                )
    return diags
