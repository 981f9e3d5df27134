"""Language sample measures over annotated transcripts.

Frequency counts over the main line, %mor lemmas/POS/tags, and %gra
relations, plus the classic diversity and length measures: MLU in words and
morphemes, TTR, NDW, and the moving-average TTR.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fnmatch import fnmatchcase

from .chat import TERMINATORS, TokenKind, Transcript, Utterance, mor_eligible, word_tokens


class MissingTier(Exception):
    """The queried tier is present on no utterance."""


class NoUtterances(Exception):
    """The speaker has no utterances in the transcript."""


_FACETS = {
    "main": ("word",),
    "mor": ("lemma", "pos", "tag"),
    "gra": ("relation",),
}


@dataclass(frozen=True)
class FreqQuery:
    tier: str
    facet: str
    pattern: str | None = None
    speakers: frozenset[str] | None = None

    def __post_init__(self):
        if self.tier not in _FACETS:
            raise ValueError(f"unknown tier {self.tier!r}")
        if self.facet not in _FACETS[self.tier]:
            raise ValueError(f"facet {self.facet!r} invalid for tier {self.tier!r}")


@dataclass(frozen=True)
class MeasureReport:
    speaker: str
    utterance_count: int
    word_tokens: int
    word_types: int
    mlu_words: float
    mlu_morphemes: float
    ttr: float
    ndw: int
    mattr: float | None


@dataclass(frozen=True)
class MorAnalysis:
    pos: str
    lemma: str
    tags: tuple[str, ...]


def parse_mor_tier(content: str) -> list[tuple[MorAnalysis, ...]]:
    """Split a %mor tier into groups of analyses; the terminator is dropped.

    A hyphen inside a lemma is indistinguishable from a tag separator, so
    lemmas are read up to the first hyphen.
    """
    elements = content.split()
    if elements and elements[-1] in TERMINATORS:
        elements = elements[:-1]
    groups = []
    for element in elements:
        words = []
        for item in element.split("~"):
            pos, _, rest = item.partition("|")
            lemma, *tags = rest.split("-")
            words.append(MorAnalysis(pos=pos, lemma=lemma, tags=tuple(tags)))
        groups.append(tuple(words))
    return groups


def parse_gra_tier(content: str) -> list[tuple[int, int, str]]:
    entries = []
    for item in content.split():
        index, head, relation = item.split("|", 2)
        entries.append((int(index), int(head), relation))
    return entries


def _selected(t: Transcript, speakers: frozenset[str] | None) -> list[Utterance]:
    if speakers is None:
        return list(t.utterances)
    return [u for u in t.utterances if u.speaker_code in speakers]


def freq(t: Transcript, q: FreqQuery) -> dict[str, int]:
    """Count facet instances, ordered by descending count then term.

    Raises MissingTier when a %mor or %gra query finds the tier on no
    utterance at all.
    """
    tier_name = {"mor": "%mor", "gra": "%gra"}.get(q.tier)
    if tier_name is not None and all(u.tier(tier_name) is None for u in t.utterances):
        raise MissingTier(f"no utterance carries {tier_name}")
    counts: Counter[str] = Counter()
    for u in _selected(t, q.speakers):
        if q.tier == "main":
            counts.update(tok.text for tok in word_tokens(u))
            continue
        content = u.tier(tier_name)
        if content is None:
            continue
        if q.tier == "gra":
            counts.update(relation for _, _, relation in parse_gra_tier(content))
            continue
        for group in parse_mor_tier(content):
            for analysis in group:
                if q.facet == "lemma":
                    counts[analysis.lemma] += 1
                elif q.facet == "pos":
                    counts[analysis.pos] += 1
                else:
                    counts.update(analysis.tags)
    if q.pattern is not None:
        if any(ch in q.pattern for ch in "*?["):
            matches = lambda term: fnmatchcase(term, q.pattern)
        else:
            matches = lambda term: term == q.pattern
        counts = Counter({term: n for term, n in counts.items() if matches(term)})
    return dict(sorted(counts.items(), key=lambda item: (-item[1], item[0])))


def _lemma_stream(utterances: list[Utterance]) -> list[str] | None:
    """One lemma per word token (the stem of its %mor group), or None.

    Requires every utterance to carry a %mor tier whose groups line up with
    its eligible tokens; otherwise the caller falls back to surfaces.
    """
    stream: list[str] = []
    for u in utterances:
        content = u.tier("%mor")
        if content is None:
            return None
        groups = parse_mor_tier(content)
        eligible = mor_eligible(u)
        if len(groups) != len(eligible):
            return None
        for tok, group in zip(eligible, groups):
            if tok.kind is TokenKind.WORD:
                stream.append(group[0].lemma)
    return stream


def _morpheme_count(utterances: list[Utterance]) -> int | None:
    total = 0
    for u in utterances:
        content = u.tier("%mor")
        if content is None:
            return None
        groups = parse_mor_tier(content)
        eligible = mor_eligible(u)
        if len(groups) != len(eligible):
            return None
        total += sum(
            len(group)
            for tok, group in zip(eligible, groups)
            if tok.kind is TokenKind.WORD
        )
    return total


def moving_average_ttr(stream: list[str], window: int) -> float | None:
    """Mean type/token ratio over all contiguous windows; None when short."""
    if window < 1 or len(stream) < window:
        return None
    ratios = []
    for start in range(len(stream) - window + 1):
        chunk = stream[start : start + window]
        ratios.append(len(set(chunk)) / window)
    return sum(ratios) / len(ratios)


def measures(t: Transcript, speaker: str, mattr_window: int = 100) -> MeasureReport:
    """Compute the measure battery for one speaker.

    Diversity measures run over %mor stem lemmas when every utterance of
    the speaker carries an aligned %mor tier, otherwise over case-folded
    surfaces.
    """
    utterances = [u for u in t.utterances if u.speaker_code == speaker]
    if not utterances:
        raise NoUtterances(f"speaker {speaker} has no utterances")
    tokens_per_utt = [word_tokens(u) for u in utterances]
    total_words = sum(len(toks) for toks in tokens_per_utt)
    stream = _lemma_stream(utterances)
    if stream is None:
        stream = [tok.surface.casefold() for toks in tokens_per_utt for tok in toks]
    morphemes = _morpheme_count(utterances)
    if morphemes is None:
        morphemes = total_words
    types = len(set(stream))
    return MeasureReport(
        speaker=speaker,
        utterance_count=len(utterances),
        word_tokens=total_words,
        word_types=types,
        mlu_words=total_words / len(utterances),
        mlu_morphemes=morphemes / len(utterances),
        ttr=types / len(stream) if stream else 0.0,
        ndw=types,
        mattr=moving_average_ttr(stream, mattr_window),
    )
