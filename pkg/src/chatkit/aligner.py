"""Two-pass text-media alignment.

Pass one recovers utterance time intervals by aligning the transcript
against an ASR-generated, timestamped "backplate" under minimum form-level
edit distance.  Pass two resolves per-word times from an externally produced
cross-attention matrix: mean centering, median filter smoothing, then a
minimum-cost monotone path (DTW) over the negated matrix.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import median_filter

from .chat import MainToken, TimeInterval, TokenKind, Transcript, Utterance


class AlignmentError(Exception):
    pass


class NoAlignments(AlignmentError):
    """Not a single transcript token aligned against the backplate."""


class BadKernel(AlignmentError):
    """Median filter kernels must be odd and at least 1."""


class EmptyGroup(AlignmentError):
    """A form maps to zero decoder rows."""


@dataclass(frozen=True)
class BackplateToken:
    surface: str
    start_ms: int
    end_ms: int

    def __post_init__(self):
        if self.start_ms > self.end_ms:
            raise ValueError(f"backplate token {self.surface!r} has start > end")


@dataclass(frozen=True)
class Backplate:
    tokens: tuple[BackplateToken, ...]

    def __post_init__(self):
        starts = [t.start_ms for t in self.tokens]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValueError("backplate start times must be non-decreasing")


class AlignKind(enum.Enum):
    MATCH = "match"
    SUBSTITUTE = "substitute"
    DELETE = "delete"
    INSERT = "insert"


@dataclass(frozen=True)
class AlignOp:
    kind: AlignKind
    gold_index: int | None = None
    backplate_index: int | None = None

    def __post_init__(self):
        needs_gold = self.kind in (AlignKind.MATCH, AlignKind.SUBSTITUTE, AlignKind.DELETE)
        needs_silver = self.kind in (AlignKind.MATCH, AlignKind.SUBSTITUTE, AlignKind.INSERT)
        if needs_gold != (self.gold_index is not None):
            raise ValueError(f"{self.kind} and gold_index={self.gold_index} disagree")
        if needs_silver != (self.backplate_index is not None):
            raise ValueError(f"{self.kind} and backplate_index={self.backplate_index} disagree")


def comparable_form(form: str) -> str:
    """Case-fold and strip edge punctuation for form equality."""
    form = form.casefold()
    start, end = 0, len(form)
    while start < end and not form[start].isalnum():
        start += 1
    while end > start and not form[end - 1].isalnum():
        end -= 1
    return form[start:end] or form


def align_sequences(gold: Sequence[str], silver: Sequence[str]) -> list[AlignOp]:
    """Minimum-edit-distance alignment of two form sequences.

    Costs are 0 for a match and 1 for substitute/delete/insert; ties break
    toward the diagonal, then deletion, then insertion, which makes the op
    sequence deterministic.
    """
    gold_cmp = [comparable_form(f) for f in gold]
    silver_cmp = [comparable_form(f) for f in silver]
    m, n = len(gold_cmp), len(silver_cmp)
    dist = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        dist[i][0] = i
    for j in range(1, n + 1):
        dist[0][j] = j
    for i in range(1, m + 1):
        row, prev = dist[i], dist[i - 1]
        gi = gold_cmp[i - 1]
        for j in range(1, n + 1):
            cost = 0 if gi == silver_cmp[j - 1] else 1
            row[j] = min(prev[j - 1] + cost, prev[j] + 1, row[j - 1] + 1)
    ops: list[AlignOp] = []
    i, j = m, n
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0:
            cost = 0 if gold_cmp[i - 1] == silver_cmp[j - 1] else 1
            if dist[i - 1][j - 1] + cost == here:
                kind = AlignKind.MATCH if cost == 0 else AlignKind.SUBSTITUTE
                ops.append(AlignOp(kind, gold_index=i - 1, backplate_index=j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and dist[i - 1][j] + 1 == here:
            ops.append(AlignOp(AlignKind.DELETE, gold_index=i - 1))
            i -= 1
            continue
        ops.append(AlignOp(AlignKind.INSERT, backplate_index=j - 1))
        j -= 1
    ops.reverse()
    return ops


def levenshtein_distance(gold: Sequence[str], silver: Sequence[str]) -> int:
    """Reference scalar edit distance, kept free of any backtrace logic."""
    a = [comparable_form(f) for f in gold]
    b = [comparable_form(f) for f in silver]
    previous = list(range(len(b) + 1))
    for i, ai in enumerate(a, start=1):
        current = [i]
        for j, bj in enumerate(b, start=1):
            current.append(
                min(
                    previous[j - 1] + (0 if ai == bj else 1),
                    previous[j] + 1,
                    current[j - 1] + 1,
                )
            )
        previous = current
    return previous[-1]


def alignable_tokens(u: Utterance) -> list[MainToken]:
    """Tokens that were actually spoken: words, fillers, retraced material."""
    return [
        t
        for t in u.tokens
        if t.kind in (TokenKind.WORD, TokenKind.FILLER, TokenKind.RETRACE)
    ]


def _alignment_form(tok: MainToken) -> str:
    return tok.replacement if tok.replacement is not None else tok.spoken


def recover_utterance_times(t: Transcript, b: Backplate, pad_ms: int = 500) -> Transcript:
    """Assign each utterance a time interval read off the backplate.

    An utterance with at least one matched or substituted token spans from
    the first aligned backplate token (minus the pad, floored at zero) to
    the last (plus the pad).  Utterances with no aligned token inherit the
    gap between their aligned neighbours; at the edges the gap is clamped
    to zero and to the final backplate timestamp.
    """
    gold_forms: list[str] = []
    owner: list[int] = []
    for index, u in enumerate(t.utterances):
        for tok in alignable_tokens(u):
            gold_forms.append(_alignment_form(tok))
            owner.append(index)
    if not gold_forms or not b.tokens:
        raise NoAlignments("nothing to align")
    silver_forms = [tok.surface for tok in b.tokens]
    spans: dict[int, list[int]] = {}
    for op in align_sequences(gold_forms, silver_forms):
        if op.kind in (AlignKind.MATCH, AlignKind.SUBSTITUTE):
            spans.setdefault(owner[op.gold_index], []).append(op.backplate_index)
    if not spans:
        raise NoAlignments("no transcript token aligned against the backplate")

    count = len(t.utterances)
    intervals: list[TimeInterval | None] = [None] * count
    for index, backplate_indices in spans.items():
        start = max(0, b.tokens[min(backplate_indices)].start_ms - pad_ms)
        end = b.tokens[max(backplate_indices)].end_ms + pad_ms
        intervals[index] = TimeInterval(start, end)
    last_ts = b.tokens[-1].end_ms
    for index in range(count):
        if intervals[index] is not None:
            continue
        previous = next(
            (intervals[k] for k in range(index - 1, -1, -1) if intervals[k] is not None), None
        )
        following = next(
            (intervals[k] for k in range(index + 1, count) if intervals[k] is not None), None
        )
        lo = previous.end_ms if previous is not None else 0
        hi = following.start_ms if following is not None else last_ts
        if hi < lo:
            lo = hi = (lo + hi) // 2
        intervals[index] = TimeInterval(lo, hi)
    return t.with_utterances(
        tuple(u.with_time(interval) for u, interval in zip(t.utterances, intervals))
    )


# ---------------------------------------------------------------------------
# word-level alignment over cross-attention activations


class AttentionMatrix:
    """A decoder-rows by encoder-frames activation matrix, immutable."""

    def __init__(self, values):
        array = np.array(values, dtype=np.float64)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError(f"attention matrix must be 2-D and non-empty, got {array.shape}")
        if not np.isfinite(array).all():
            raise ValueError("attention matrix contains non-finite values")
        array.setflags(write=False)
        self.values = array

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        return isinstance(other, AttentionMatrix) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"AttentionMatrix({self.rows}x{self.cols})"


@dataclass(frozen=True)
class TokenGroup:
    form: str
    row_start: int
    row_end: int  # exclusive


@dataclass(frozen=True)
class TokenGroupMap:
    groups: tuple[TokenGroup, ...]

    def __post_init__(self):
        cursor = 0
        for g in self.groups:
            if g.row_start < cursor or g.row_end < g.row_start:
                raise ValueError(f"group rows out of order at {g.form!r}")
            cursor = g.row_end


def mean_center(m: AttentionMatrix) -> AttentionMatrix:
    """Subtract each row's mean; idempotent."""
    return AttentionMatrix(m.values - m.values.mean(axis=1, keepdims=True))


def median_filter_rows(m: AttentionMatrix, kernel: int) -> AttentionMatrix:
    """Median-filter each row along the frame axis with reflect padding."""
    if kernel < 1 or kernel % 2 == 0:
        raise BadKernel(f"kernel must be odd and >= 1, got {kernel}")
    if kernel == 1:
        return m
    return AttentionMatrix(median_filter(m.values, size=(1, kernel), mode="reflect"))


def dtw_path(cost) -> list[tuple[int, int]]:
    """Minimum-cost monotone path from (0,0) to (rows-1, cols-1).

    Moves are down, right, and diagonal; ties break diagonal first, then
    row advance, then column advance.
    """
    values = cost.values if isinstance(cost, AttentionMatrix) else np.asarray(cost, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("cost matrix must be 2-D and non-empty")
    if not np.isfinite(values).all():
        raise ValueError("cost matrix contains non-finite values")
    rows, cols = values.shape
    acc = np.empty((rows, cols), dtype=np.float64)
    acc[0, 0] = values[0, 0]
    for j in range(1, cols):
        acc[0, j] = acc[0, j - 1] + values[0, j]
    for i in range(1, rows):
        acc[i, 0] = acc[i - 1, 0] + values[i, 0]
        for j in range(1, cols):
            acc[i, j] = values[i, j] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    path = [(rows - 1, cols - 1)]
    i, j = rows - 1, cols - 1
    while (i, j) != (0, 0):
        candidates = []
        if i > 0 and j > 0:
            candidates.append((acc[i - 1, j - 1], 0, i - 1, j - 1))
        if i > 0:
            candidates.append((acc[i - 1, j], 1, i - 1, j))
        if j > 0:
            candidates.append((acc[i, j - 1], 2, i, j - 1))
        best = min(candidates)
        i, j = best[2], best[3]
        path.append((i, j))
    path.reverse()
    return path


def align_words(
    forms: Sequence[str],
    m: AttentionMatrix,
    g: TokenGroupMap,
    frame_ms: int = 20,
    utt_start_ms: int = 0,
    kernel: int = 7,
) -> list[tuple[str, TimeInterval]]:
    """Resolve one time interval per form from the attention matrix.

    The matrix is mean-centered and median-filter smoothed, its negation is
    traversed by dtw_path, and each form's interval covers the frames the
    path visits on that form's decoder rows, offset by the utterance start.
    """
    if len(forms) != len(g.groups):
        raise ValueError(f"{len(forms)} forms but {len(g.groups)} token groups")
    if frame_ms <= 0:
        raise ValueError("frame_ms must be positive")
    for group in g.groups:
        if group.row_end <= group.row_start:
            raise EmptyGroup(f"form {group.form!r} maps to no decoder rows")
        if group.row_end > m.rows:
            raise ValueError(f"group for {group.form!r} exceeds matrix rows")
    smoothed = median_filter_rows(mean_center(m), kernel)
    path = dtw_path(-smoothed.values)
    frames_by_row: dict[int, list[int]] = {}
    for row, col in path:
        frames_by_row.setdefault(row, []).append(col)
    out: list[tuple[str, TimeInterval]] = []
    for form, group in zip(forms, g.groups):
        frames = [
            frame
            for row in range(group.row_start, group.row_end)
            for frame in frames_by_row.get(row, ())
        ]
        lo, hi = min(frames), max(frames)
        out.append(
            (form, TimeInterval(utt_start_ms + lo * frame_ms, utt_start_ms + (hi + 1) * frame_ms))
        )
    return out


# ---------------------------------------------------------------------------
# file interfaces


def load_backplate(path: str | Path) -> Backplate:
    """Read a backplate: a JSON array of {surface, start_ms, end_ms}."""
    entries = json.loads(Path(path).read_text("utf-8"))
    return Backplate(
        tuple(
            BackplateToken(e["surface"], int(e["start_ms"]), int(e["end_ms"])) for e in entries
        )
    )


def save_backplate(b: Backplate, path: str | Path) -> None:
    payload = [
        {"surface": t.surface, "start_ms": t.start_ms, "end_ms": t.end_ms} for t in b.tokens
    ]
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=1) + "\n", "utf-8")


def load_attention(path: str | Path) -> AttentionMatrix:
    """Read an attention file: a `rows cols` line, then rows of reals."""
    lines = Path(path).read_text("utf-8").split("\n")
    rows, cols = (int(x) for x in lines[0].split())
    values = np.array(
        [[float(x) for x in lines[1 + i].split()] for i in range(rows)], dtype=np.float64
    )
    if values.shape != (rows, cols):
        raise ValueError(f"attention file {path} does not match its declared shape")
    return AttentionMatrix(values)


def save_attention(m: AttentionMatrix, path: str | Path) -> None:
    lines = [f"{m.rows} {m.cols}"]
    lines.extend(" ".join(repr(v) for v in row) for row in m.values.tolist())
    Path(path).write_text("\n".join(lines) + "\n", "utf-8")


def load_token_groups(path: str | Path) -> TokenGroupMap:
    """Read a token-group file: JSON entries {form, row_start, row_end_exclusive}."""
    entries = json.loads(Path(path).read_text("utf-8"))
    return TokenGroupMap(
        tuple(
            TokenGroup(e["form"], int(e["row_start"]), int(e["row_end_exclusive"]))
            for e in entries
        )
    )


def save_token_groups(g: TokenGroupMap, path: str | Path) -> None:
    payload = [
        {"form": grp.form, "row_start": grp.row_start, "row_end_exclusive": grp.row_end}
        for grp in g.groups
    ]
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=1) + "\n", "utf-8")
