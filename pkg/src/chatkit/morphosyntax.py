"""Universal Dependencies analyses reformatted as CHAT %mor/%gra tiers.

Reads CONLL-U sentences produced by an external tagger, repairs multi-word
tokens with a lexicon plus orthographic contraction rules, maps UD features
to the dash-joined grammatical-feature tags used on %mor lines, emits
index|head|RELATION triples for %gra, and exports dependency graphs as DOT.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .chat import MainToken, TokenKind, Utterance, mor_eligible
from .diagnostics import Diagnostic


class ConlluError(Exception):
    pass


class BadColumnCount(ConlluError):
    pass


class NonContiguousIds(ConlluError):
    pass


class CyclicHeads(ConlluError):
    pass


class LengthMismatch(Exception):
    """Characters and boundary labels differ in length."""


class LeadingI(Exception):
    """A boundary label stream must open with B."""


class CoverageMismatch(Exception):
    """New tokens do not cover the utterance text exactly."""


class AlignmentMismatch(Exception):
    """Analysis groups do not line up with the utterance tokens."""


class HeadRemapFailure(Exception):
    """A removed word was a head target that could not be remapped."""


@dataclass(frozen=True)
class ConlluWord:
    id: int
    form: str
    lemma: str
    upos: str
    feats: tuple[tuple[str, str], ...] = ()
    head: int = 0
    deprel: str = "root"

    @property
    def feats_map(self) -> dict[str, str]:
        return dict(self.feats)


@dataclass(frozen=True)
class MwtSpan:
    start: int  # first covered word id
    end: int  # last covered word id, inclusive
    surface: str


@dataclass(frozen=True)
class ConlluSentence:
    words: tuple[ConlluWord, ...]
    mwt_spans: tuple[MwtSpan, ...] = ()

    def check(self) -> None:
        ids = [w.id for w in self.words]
        if ids != list(range(1, len(ids) + 1)):
            raise NonContiguousIds(f"word ids {ids} are not 1..n")
        n = len(ids)
        for w in self.words:
            if not 0 <= w.head <= n:
                raise ConlluError(f"word {w.id} has head {w.head} outside 0..{n}")
            if w.head == w.id:
                raise CyclicHeads(f"word {w.id} is its own head")
            if (w.head == 0) != (w.deprel.lower() == "root"):
                raise ConlluError(f"word {w.id}: head {w.head} with deprel {w.deprel!r}")
        for w in self.words:
            seen = set()
            cursor = w.id
            while cursor != 0:
                if cursor in seen:
                    raise CyclicHeads(f"head cycle through word {w.id}")
                seen.add(cursor)
                cursor = self.words[cursor - 1].head
        if sum(1 for w in self.words if w.head == 0) != 1:
            raise ConlluError("sentence must have exactly one root")
        for span in self.mwt_spans:
            if not 1 <= span.start <= span.end <= n:
                raise ConlluError(f"mwt span {span.start}-{span.end} out of range")

    @property
    def root(self) -> ConlluWord:
        return next(w for w in self.words if w.head == 0)


# ---------------------------------------------------------------------------
# CONLL-U reading and writing


def _parse_feats(text: str) -> tuple[tuple[str, str], ...]:
    if text in ("_", ""):
        return ()
    pairs = []
    for item in text.split("|"):
        name, _, value = item.partition("=")
        pairs.append((name, value))
    return tuple(pairs)


def _render_feats(feats: tuple[tuple[str, str], ...]) -> str:
    if not feats:
        return "_"
    return "|".join(f"{name}={value}" for name, value in feats)


def parse_conllu(text: str) -> list[ConlluSentence]:
    """Parse 10-column CONLL-U text; comments and empty nodes are skipped."""
    sentences: list[ConlluSentence] = []
    words: list[ConlluWord] = []
    spans: list[MwtSpan] = []

    def finish():
        nonlocal words, spans
        if words:
            sentence = ConlluSentence(tuple(words), tuple(spans))
            sentence.check()
            sentences.append(sentence)
        words, spans = [], []

    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            finish()
            continue
        if line.startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 10:
            raise BadColumnCount(f"line {line_no}: {len(columns)} columns")
        token_id = columns[0]
        if "." in token_id:
            continue  # enhanced-dependency empty node
        if "-" in token_id:
            start, _, end = token_id.partition("-")
            spans.append(MwtSpan(int(start), int(end), columns[1]))
            continue
        head_text = columns[6]
        try:
            head = int(head_text)
        except ValueError as exc:
            raise ConlluError(f"line {line_no}: bad head {head_text!r}") from exc
        words.append(
            ConlluWord(
                id=int(token_id),
                form=columns[1],
                lemma=columns[2],
                upos=columns[3],
                feats=_parse_feats(columns[5]),
                head=head,
                deprel=columns[7],
            )
        )
    finish()
    return sentences


def serialize_conllu(sentences: Iterable[ConlluSentence]) -> str:
    blocks = []
    for sentence in sentences:
        span_at = {span.start: span for span in sentence.mwt_spans}
        lines = []
        for w in sentence.words:
            span = span_at.get(w.id)
            if span is not None:
                lines.append("\t".join([f"{span.start}-{span.end}", span.surface] + ["_"] * 8))
            lines.append(
                "\t".join(
                    [
                        str(w.id),
                        w.form,
                        w.lemma,
                        w.upos,
                        "_",
                        _render_feats(w.feats),
                        str(w.head),
                        w.deprel,
                        "_",
                        "_",
                    ]
                )
            )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


# ---------------------------------------------------------------------------
# character-level word boundaries


def decode_word_boundaries(chars: Sequence[str], labels: Sequence[str]) -> list[str]:
    """Group characters into tokens at B labels; I continues the token."""
    if len(chars) != len(labels):
        raise LengthMismatch(f"{len(chars)} characters but {len(labels)} labels")
    tokens: list[str] = []
    for ch, label in zip(chars, labels):
        if label == "B":
            tokens.append(ch)
        elif label == "I":
            if not tokens:
                raise LeadingI("label stream must start with B")
            tokens[-1] += ch
        else:
            raise ValueError(f"unknown boundary label {label!r}")
    return tokens


def retokenize_utterance(u: Utterance, tokens: Sequence[str]) -> Utterance:
    """Rewrite the main line with a new tokenization of the same characters."""
    original = "".join(tok.surface for tok in u.tokens)
    if "".join(tokens) != original:
        raise CoverageMismatch(
            f"tokens cover {''.join(tokens)!r} but the utterance reads {original!r}"
        )
    return u.with_tokens(tuple(MainToken(tok) for tok in tokens))


# ---------------------------------------------------------------------------
# multi-word token correction


@dataclass(frozen=True)
class MwtLexicon:
    language: str
    expansions: tuple[tuple[str, tuple[str, ...]], ...] = ()
    protections: frozenset[str] = frozenset()

    def __post_init__(self):
        overlap = {surface for surface, _ in self.expansions} & self.protections
        if overlap:
            raise ValueError(f"tokens both expanded and protected: {sorted(overlap)}")

    @property
    def expansion_map(self) -> dict[str, tuple[str, ...]]:
        return dict(self.expansions)


def parse_mwt_lexicon(text: str, language: str) -> MwtLexicon:
    expansions = []
    protections = set()
    for line in text.splitlines():
        line = line.rstrip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("="):
            protections.add(line[1:].strip())
            continue
        surface, _, words = line.partition("\t")
        parts = tuple(words.split())
        if not surface or not parts:
            raise ValueError(f"bad MWT lexicon line: {line!r}")
        expansions.append((surface, parts))
    return MwtLexicon(language, tuple(expansions), frozenset(protections))


def load_mwt_lexicon(path: str | Path, language: str | None = None) -> MwtLexicon:
    path = Path(path)
    return parse_mwt_lexicon(path.read_text("utf-8"), language or path.stem)


def builtin_mwt_lexicon(language: str) -> MwtLexicon:
    entry = resources.files("chatkit") / "data" / f"{language}.mwt"
    if not entry.is_file():
        return MwtLexicon(language=language)
    return parse_mwt_lexicon(entry.read_text("utf-8"), language)


_FRENCH_PREFIXES = {
    "jusqu'": "jusque",
    "lorsqu'": "lorsque",
    "puisqu'": "puisque",
    "quoiqu'": "quoique",
    "qu'": "que",
    "j'": "je",
    "t'": "te",
    "s'": "se",
    "m'": "me",
    "n'": "ne",
    "c'": "ce",
    "d'": "de",
}
_ITALIAN_PREFIXES = {
    "t'": "ti",
    "m'": "mi",
    "s'": "si",
    "c'": "ci",
    "v'": "vi",
    "d'": "di",
}
_ENGLISH_SUFFIXES = {
    "'re": "are",
    "'m": "am",
}
_LANGUAGE_ALIASES = {
    "fr": "fr",
    "fra": "fr",
    "fre": "fr",
    "it": "it",
    "ita": "it",
    "en": "en",
    "eng": "en",
}


def detect_rule_contractions(form: str, language: str) -> list[str] | None:
    """Orthographic expansion of common clitic and be-contractions.

    Supports French and Italian apostrophe preclitics and English
    be-contractions; returns None when no rule fires.
    """
    lang = _LANGUAGE_ALIASES.get(language.lower())
    if lang is None or form.count("'") != 1:
        return None
    if lang == "en":
        for suffix, word in _ENGLISH_SUFFIXES.items():
            if form.endswith(suffix) and len(form) > len(suffix):
                base = form[: -len(suffix)]
                if base.isalpha():
                    return [base, word]
        return None
    prefixes = _FRENCH_PREFIXES if lang == "fr" else _ITALIAN_PREFIXES
    for prefix in sorted(prefixes, key=len, reverse=True):
        if form.lower().startswith(prefix):
            rest = form[len(prefix) :]
            if rest and rest.isalpha():
                return [prefixes[prefix], rest]
    return None


def _split_parts(form: str) -> tuple[str, ...] | None:
    parts = form.split("_")
    if len(parts) > 1 and all(parts):
        return tuple(parts)
    return None


def _merge_span(s: ConlluSentence, span: MwtSpan) -> ConlluSentence:
    members = [w for w in s.words if span.start <= w.id <= span.end]
    if not members:
        raise HeadRemapFailure(f"span {span.start}-{span.end} covers no words")
    inside = {w.id for w in members}
    anchor = next((w for w in members if w.head not in inside), members[0])
    width = span.end - span.start

    def new_id(old: int) -> int:
        if old < span.start:
            return old
        if old <= span.end:
            return span.start
        return old - width

    out: list[ConlluWord] = []
    for w in s.words:
        if w.id in inside:
            if w.id != anchor.id:
                continue
            out.append(
                ConlluWord(
                    id=span.start,
                    form=span.surface,
                    lemma=span.surface,
                    upos=anchor.upos,
                    feats=anchor.feats,
                    head=anchor.head,
                    deprel=anchor.deprel,
                )
            )
        else:
            out.append(replace(w, id=new_id(w.id)))
    remapped = tuple(
        w if w.head == 0 else replace(w, head=new_id(w.head)) for w in out
    )
    spans = tuple(
        MwtSpan(new_id(sp.start), new_id(sp.end), sp.surface)
        for sp in s.mwt_spans
        if sp != span
    )
    return ConlluSentence(remapped, spans)


def _expand_words(s: ConlluSentence, lex: MwtLexicon) -> ConlluSentence:
    expansion_map = lex.expansion_map
    covered = {wid for sp in s.mwt_spans for wid in range(sp.start, sp.end + 1)}
    out: list[ConlluWord] = []
    head_is_final: list[bool] = []
    id_map: dict[int, int] = {}
    new_spans: list[MwtSpan] = []
    changed = False
    for w in s.words:
        parts: tuple[str, ...] | None = None
        link = "dep"
        if w.id not in covered and w.form not in lex.protections:
            parts = expansion_map.get(w.form)
            if parts is None:
                rule = detect_rule_contractions(w.form, lex.language)
                parts = tuple(rule) if rule else None
            if parts is None:
                underscore = _split_parts(w.form)
                if underscore is not None:
                    parts, link = underscore, "flat"
        first_id = len(out) + 1
        id_map[w.id] = first_id
        if parts is None:
            out.append(replace(w, id=first_id))
            head_is_final.append(False)
            continue
        changed = True
        out.append(
            ConlluWord(
                id=first_id,
                form=parts[0],
                lemma=parts[0],
                upos=w.upos,
                feats=w.feats,
                head=w.head,
                deprel=w.deprel,
            )
        )
        head_is_final.append(False)
        for part in parts[1:]:
            out.append(
                ConlluWord(
                    id=len(out) + 1,
                    form=part,
                    lemma=part,
                    upos="X",
                    feats=(),
                    head=first_id,
                    deprel=link,
                )
            )
            head_is_final.append(True)
        new_spans.append(MwtSpan(first_id, len(out), w.form))
    if not changed:
        return s
    words = tuple(
        w if final or w.head == 0 else replace(w, head=id_map[w.head])
        for w, final in zip(out, head_is_final)
    )
    spans = list(new_spans)
    spans.extend(
        MwtSpan(id_map[sp.start], id_map[sp.end], sp.surface) for sp in s.mwt_spans
    )
    spans.sort(key=lambda sp: sp.start)
    return ConlluSentence(words, tuple(spans))


def apply_mwt_correction(s: ConlluSentence, lex: MwtLexicon) -> ConlluSentence:
    """Repair multi-word tokens the upstream analysis got wrong.

    Protected tokens the analysis over-split are merged back into a single
    word; unsplit lexicon entries, rule-detected contractions, and
    underscore compounds are expanded into their syntactic words under a
    surface span.  Unaffected sentences are returned as-is.
    """
    current = s
    while True:
        span = next(
            (sp for sp in current.mwt_spans if sp.surface in lex.protections), None
        )
        if span is None:
            break
        current = _merge_span(current, span)
    result = _expand_words(current, lex)
    if result is not s:
        result.check()
    return result


# ---------------------------------------------------------------------------
# grammatical feature mapping


@dataclass(frozen=True)
class MorWord:
    pos: str
    lemma: str
    tags: tuple[str, ...] = ()

    def render(self) -> str:
        return self.pos + "|" + self.lemma + "".join(f"-{t}" for t in self.tags)


@dataclass(frozen=True)
class MorGroup:
    words: tuple[MorWord, ...]

    def render(self) -> str:
        return "~".join(w.render() for w in self.words)


@dataclass(frozen=True)
class GraEntry:
    index: int
    head: int
    relation: str

    def render(self) -> str:
        return f"{self.index}|{self.head}|{self.relation}"


# Emission order of reported features; Number and Person fuse into a final
# S/P + person-digit tag.  Definite precedes PronType, matching %mor output
# like det|a-Ind-Art.
_FEATURE_ORDER = (
    "VerbForm",
    "Mood",
    "Tense",
    "Aspect",
    "Voice",
    "Definite",
    "PronType",
    "Case",
    "Degree",
    "Polarity",
    "Polite",
    "Clusivity",
    "Gender",
)
_NUMBER_TAGS = {"Sing": "S", "Plur": "P"}
_PERSON_TAGS = {"0": "4", "1": "1", "2": "2", "3": "3", "4": "4"}
_FORBIDDEN_TAG_CHARS = str.maketrans("", "", "-~| \t")


def _clean_tag(value: str) -> str:
    return value.translate(_FORBIDDEN_TAG_CHARS)


def map_features(
    upos: str,
    feats: Mapping[str, str] | Sequence[tuple[str, str]],
    suppress_singular: bool = False,
    diagnostics: list[Diagnostic] | None = None,
    file: str | None = None,
    line: int | None = None,
) -> list[str]:
    """Map UD features to the ordered dash-tag list reported after a lemma.

    Feature values are reported verbatim except: Gender ComNeut is omitted,
    zeroth person is reported as fourth, and Number and Person fuse into
    S/P plus the person digit.  With suppress_singular set, singular number
    itself is left out.  Values outside the known inventory pass through
    (cleaned of separator characters) with a diagnostic.
    """
    table = dict(feats)

    def unknown(name: str, value: str) -> str:
        if diagnostics is not None:
            diagnostics.append(
                Diagnostic(
                    code="unknown-feature-value",
                    message=f"{name}={value} passed through verbatim",
                    file=file,
                    line=line,
                )
            )
        return _clean_tag(value)

    tags: list[str] = []
    for name in _FEATURE_ORDER:
        value = table.get(name)
        if value is None:
            continue
        if name == "Gender" and value == "ComNeut":
            continue
        tags.append(_clean_tag(value))
    number = table.get("Number")
    person = table.get("Person")
    number_tag = _NUMBER_TAGS.get(number) if number is not None else None
    person_tag = _PERSON_TAGS.get(person) if person is not None else None
    if number is not None and number_tag is None:
        tags.append(unknown("Number", number))
    if person is not None and person_tag is None:
        tags.append(unknown("Person", person))
    if number_tag is not None and person_tag is not None:
        if suppress_singular and number_tag == "S":
            tags.append(person_tag)
        else:
            tags.append(number_tag + person_tag)
    elif number_tag is not None:
        if not (suppress_singular and number_tag == "S"):
            tags.append(number_tag)
    elif person_tag is not None:
        tags.append(person_tag)
    return [t for t in tags if t]


# ---------------------------------------------------------------------------
# tier emission


def _word_groups(s: ConlluSentence) -> list[list[ConlluWord]]:
    """Words grouped by surface token: one group per MWT span or lone word."""
    span_at = {span.start: span for span in s.mwt_spans}
    groups: list[list[ConlluWord]] = []
    i = 0
    words = s.words
    while i < len(words):
        span = span_at.get(words[i].id)
        if span is None:
            groups.append([words[i]])
            i += 1
        else:
            size = span.end - span.start + 1
            groups.append(list(words[i : i + size]))
            i += size
    return groups


def _mor_word(w: ConlluWord, grouped: bool, **feature_kwargs) -> MorWord:
    lemma = w.lemma
    if not grouped and "_" in w.form and _split_parts(w.form) is not None:
        # unsplit underscore compound: report the whole form as the lemma
        lemma = w.form
    tags = map_features(w.upos, w.feats, **feature_kwargs)
    return MorWord(pos=w.upos.lower(), lemma=lemma, tags=tuple(tags))


def build_mor_groups(
    s: ConlluSentence,
    suppress_singular: bool = False,
    diagnostics: list[Diagnostic] | None = None,
    file: str | None = None,
    line: int | None = None,
) -> list[MorGroup]:
    kwargs = dict(
        suppress_singular=suppress_singular, diagnostics=diagnostics, file=file, line=line
    )
    groups = []
    for members in _word_groups(s):
        grouped = len(members) > 1
        groups.append(MorGroup(tuple(_mor_word(w, grouped, **kwargs) for w in members)))
    return groups


def emit_mor(
    s: ConlluSentence,
    u: Utterance,
    suppress_singular: bool = False,
    diagnostics: list[Diagnostic] | None = None,
    file: str | None = None,
) -> str:
    """Render the %mor tier: one group per eligible token, then the terminator."""
    groups = build_mor_groups(
        s, suppress_singular=suppress_singular, diagnostics=diagnostics, file=file, line=u.line
    )
    eligible = mor_eligible(u)
    if len(groups) != len(eligible):
        raise AlignmentMismatch(
            f"{len(groups)} analysis groups for {len(eligible)} eligible tokens"
        )
    return " ".join(g.render() for g in groups) + f" {u.terminator}"


def build_gra_entries(s: ConlluSentence, terminator_relation: str = "PUNCT") -> list[GraEntry]:
    entries = [
        GraEntry(index=w.id, head=w.head, relation=w.deprel.upper()) for w in s.words
    ]
    entries.append(
        GraEntry(index=len(s.words) + 1, head=s.root.id, relation=terminator_relation)
    )
    return entries


def emit_gra(s: ConlluSentence) -> str:
    """Render the %gra tier: index|head|RELATION per word plus the terminator.

    The root entry carries head 0; the terminator is attached to the root
    word with the PUNCT relation.
    """
    return " ".join(entry.render() for entry in build_gra_entries(s))


def export_dot(s: ConlluSentence, terminator: str = ".") -> str:
    """Render the dependency graph as a DOT digraph.

    One node per syntactic word (labelled with its form) plus a terminator
    node; one edge per non-root word from dependent to head, labelled with
    the uppercase relation.
    """

    def quote(text: str) -> str:
        return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'

    lines = ["digraph utterance {"]
    for w in s.words:
        lines.append(f"    n{w.id} [label={quote(w.form)}];")
    terminator_id = len(s.words) + 1
    lines.append(f"    n{terminator_id} [label={quote(terminator)}];")
    for w in s.words:
        if w.head != 0:
            lines.append(f"    n{w.id} -> n{w.head} [label={quote(w.deprel.upper())}];")
    lines.append(f"    n{terminator_id} -> n{s.root.id} [label={quote('PUNCT')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
