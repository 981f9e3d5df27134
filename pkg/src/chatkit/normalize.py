"""Deterministic transcript repairs applied before morphosyntactic analysis.

Three families of fixes: expansion of repetition codes like ``[x 3]``,
eye-dialect respelling from a per-language lexicon (``singin'`` to
``singin(g)``), and clitic spacing (``j' ai`` back to ``j'ai``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .chat import MainToken, TokenKind, Transcript, Utterance, _parse_token_stream, _REPETITION_RE
from .diagnostics import Diagnostic


class RuleKind(str, enum.Enum):
    REPETITION = "repetition"
    EYE_DIALECT = "eye_dialect"
    CLITIC_SPACING = "clitic_spacing"
    LITERAL_REPLACE = "literal_replace"


@dataclass(frozen=True)
class RepairRule:
    kind: RuleKind
    pattern: str
    replacement: str

    def __post_init__(self):
        if not self.pattern or not self.replacement:
            raise ValueError("repair rule needs a pattern and a replacement")
        if self.kind is RuleKind.EYE_DIALECT and self.pattern == self.replacement:
            raise ValueError(f"eye-dialect rule is a no-op: {self.pattern!r}")


@dataclass(frozen=True)
class RepairLexicon:
    language: str
    rules: tuple[RepairRule, ...]

    def __post_init__(self):
        seen = set()
        for rule in self.rules:
            key = (rule.kind, rule.pattern)
            if key in seen:
                raise ValueError(f"duplicate repair rule: {key}")
            seen.add(key)


def load_repair_lexicon(path: str | Path, language: str | None = None) -> RepairLexicon:
    """Read a tab-separated rule file: ``kind<TAB>pattern<TAB>replacement``."""
    path = Path(path)
    return parse_repair_lexicon(path.read_text("utf-8"), language or path.stem)


def parse_repair_lexicon(text: str, language: str) -> RepairLexicon:
    rules = []
    for line in text.splitlines():
        line = line.rstrip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"bad lexicon line: {line!r}")
        rules.append(RepairRule(RuleKind(fields[0]), fields[1], fields[2]))
    return RepairLexicon(language=language, rules=tuple(rules))


def builtin_repair_lexicon(language: str) -> RepairLexicon:
    """Shipped lexicon for a language code; empty when none is bundled."""
    name = f"{language}.repair"
    root = resources.files("chatkit") / "data"
    entry = root / name
    if not entry.is_file():
        return RepairLexicon(language=language, rules=())
    return parse_repair_lexicon(entry.read_text("utf-8"), language)


def _parse_fragment(text: str, like: MainToken) -> list[MainToken]:
    """Parse replacement text into tokens, inheriting kind and codes."""
    tokens = list(_parse_token_stream(text.split(), None))
    if like.kind is not TokenKind.WORD:
        tokens = [replace(t, kind=like.kind) for t in tokens]
    if like.codes and tokens:
        tokens[-1] = replace(tokens[-1], codes=tokens[-1].codes + like.codes)
    return tokens


def expand_repetitions(
    u: Utterance, diagnostics: list[Diagnostic] | None = None, file: str | None = None
) -> Utterance:
    """Expand ``w [x N]`` and ``<a b> [x N]`` into N literal copies.

    Codes with a count below 2 or a non-integer count are left in place and
    reported.  Applying the expansion twice equals applying it once.
    """
    out: list[MainToken] = []
    changed = False
    for tok in u.tokens:
        rep = next((c for c in tok.codes if _REPETITION_RE.fullmatch(c.code)), None)
        if rep is None:
            out.append(tok)
            continue
        count_text = _REPETITION_RE.fullmatch(rep.code).group(1)
        try:
            count = int(count_text)
        except ValueError:
            count = -1
        if count < 2:
            if diagnostics is not None:
                diagnostics.append(
                    Diagnostic(
                        code="bad-repetition-count",
                        message=f"repetition code {rep.code} not expandable",
                        file=file,
                        line=u.line,
                    )
                )
            out.append(tok)
            continue
        carrier = replace(tok, codes=tuple(c for c in tok.codes if c != rep))
        span_start = max(0, len(out) - (rep.scope - 1))
        span = out[span_start:] + [carrier]
        del out[span_start:]
        for _ in range(count):
            out.extend(span)
        changed = True
    return u.with_tokens(tuple(out)) if changed else u


def apply_lexicon(u: Utterance, lex: RepairLexicon) -> Utterance:
    """Rewrite tokens whose spelling matches an eye-dialect or literal rule.

    Matching is case-sensitive on the transcript spelling, longest pattern
    first; replacements may carry omission parens or ``[: target]`` codes.
    """
    rules = sorted(
        (r for r in lex.rules if r.kind in (RuleKind.EYE_DIALECT, RuleKind.LITERAL_REPLACE)),
        key=lambda r: -len(r.pattern),
    )
    if not rules:
        return u
    out: list[MainToken] = []
    changed = False
    for tok in u.tokens:
        if tok.kind in (TokenKind.WORD, TokenKind.RETRACE):
            rule = next((r for r in rules if r.pattern == tok.text), None)
            if rule is not None:
                out.extend(_parse_fragment(rule.replacement, tok))
                changed = True
                continue
        out.append(tok)
    return u.with_tokens(tuple(out)) if changed else u


def fix_clitic_spacing(u: Utterance, lex: RepairLexicon) -> Utterance:
    """Merge split preclitics (``j' ai`` to ``j'ai``) and rewrite listed forms.

    A clitic_spacing rule whose pattern ends with an apostrophe merges the
    matching token with the next word; any other clitic_spacing rule rewrites
    the matching token to its (possibly multi-token) replacement.
    """
    merge = {}
    rewrite = {}
    for rule in lex.rules:
        if rule.kind is not RuleKind.CLITIC_SPACING:
            continue
        if rule.pattern.endswith("'"):
            merge[rule.pattern] = rule.replacement
        else:
            rewrite[rule.pattern] = rule.replacement
    if not merge and not rewrite:
        return u
    out: list[MainToken] = []
    changed = False
    i = 0
    while i < len(u.tokens):
        tok = u.tokens[i]
        if tok.kind in (TokenKind.WORD, TokenKind.RETRACE):
            if tok.text in rewrite:
                out.extend(_parse_fragment(rewrite[tok.text], tok))
                changed = True
                i += 1
                continue
            nxt = u.tokens[i + 1] if i + 1 < len(u.tokens) else None
            if tok.text in merge and nxt is not None and nxt.kind is tok.kind and not tok.codes:
                prefix = merge[tok.text]
                merged = replace(
                    nxt,
                    surface=prefix + nxt.surface,
                    omitted_letters=tuple(p + len(prefix) for p in nxt.omitted_letters),
                )
                out.append(merged)
                changed = True
                i += 2
                continue
        out.append(tok)
        i += 1
    return u.with_tokens(tuple(out)) if changed else u


def normalize_utterance(
    u: Utterance,
    lex: RepairLexicon,
    diagnostics: list[Diagnostic] | None = None,
    file: str | None = None,
) -> Utterance:
    """Apply all repairs in order: repetitions, clitic spacing, eye-dialect."""
    u = expand_repetitions(u, diagnostics, file)
    u = fix_clitic_spacing(u, lex)
    return apply_lexicon(u, lex)


def normalize_transcript(
    t: Transcript,
    lex: RepairLexicon,
    diagnostics: list[Diagnostic] | None = None,
    file: str | None = None,
) -> Transcript:
    return t.with_utterances(
        tuple(normalize_utterance(u, lex, diagnostics, file) for u in t.utterances)
    )
