"""Token-label codec for utterance segmentation.

An external token classifier labels each token of an unsegmented stream as
utterance start (1), middle (0), comma-bearing (5), or one of three ends
(2 declarative, 3 interrogative, 4 exclamatory).  This module decodes such
label streams into CHAT utterances and encodes gold utterances back into
labels for training data preparation.  The classifier itself lives behind
the LabelProvider seam.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .chat import MainToken, TokenKind, Utterance, parse_token


class SegLabel(enum.IntEnum):
    MIDDLE = 0
    START = 1
    END_DECLARATIVE = 2
    END_INTERROGATIVE = 3
    END_EXCLAMATORY = 4
    COMMA_AFTER = 5


_END_TERMINATORS = {
    SegLabel.END_DECLARATIVE: ".",
    SegLabel.END_INTERROGATIVE: "?",
    SegLabel.END_EXCLAMATORY: "!",
}
_TERMINATOR_ENDS = {v: k for k, v in _END_TERMINATORS.items()}

LabelProvider = Callable[[Sequence[str]], Sequence[SegLabel]]


class UnsupportedTerminator(Exception):
    """An utterance terminator has no end label."""


class ProviderLengthMismatch(Exception):
    """A label provider returned the wrong number of labels."""


@dataclass(frozen=True)
class LabeledStream:
    tokens: tuple[str, ...]
    labels: tuple[SegLabel, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels"
            )


def decode_stream(stream: LabeledStream, speaker_code: str = "SPK") -> list[Utterance]:
    """Turn a labeled token stream into utterances.

    Decoding is total: a stream that does not open with a start label begins
    an utterance implicitly, a start label in mid-utterance force-closes the
    previous utterance with ".", and a stream ending without an end label
    closes the final utterance with ".".  A comma token is inserted after
    each comma-labeled token.
    """
    utterances: list[Utterance] = []
    current: list[MainToken] = []

    def close(terminator: str):
        utterances.append(Utterance(speaker_code, tuple(current), terminator))
        current.clear()

    for text, label in zip(stream.tokens, stream.labels):
        if label is SegLabel.START and current:
            close(".")
        current.append(parse_token(text))
        if label is SegLabel.COMMA_AFTER:
            current.append(MainToken(",", kind=TokenKind.PUNCT))
        elif label in _END_TERMINATORS:
            close(_END_TERMINATORS[label])
    if current:
        close(".")
    return utterances


def encode_utterances(utterances: Sequence[Utterance]) -> LabeledStream:
    """Inverse of decode_stream for gold utterances.

    The first token of an utterance gets the start label, the last the end
    label matching the terminator, and the token before a comma the comma
    label (the comma itself is dropped from the stream; if the pre-comma
    token is also the last token, the end label wins and the comma is lost).
    """
    tokens: list[str] = []
    labels: list[SegLabel] = []
    for u in utterances:
        if u.terminator not in _TERMINATOR_ENDS:
            raise UnsupportedTerminator(f"no label for terminator {u.terminator!r}")
        first = len(tokens)
        for tok in u.tokens:
            if tok.kind is TokenKind.PUNCT and tok.surface == ",":
                # an utterance-initial comma has no carrier and is dropped
                if len(tokens) > first:
                    labels[-1] = SegLabel.COMMA_AFTER
                continue
            tokens.append(tok.text)
            labels.append(SegLabel.START if len(tokens) - 1 == first else SegLabel.MIDDLE)
        if len(tokens) > first:
            labels[-1] = _TERMINATOR_ENDS[u.terminator]
    return LabeledStream(tuple(tokens), tuple(labels))


def segment_with_provider(
    tokens: Sequence[str], provider: LabelProvider, speaker_code: str = "SPK"
) -> list[Utterance]:
    """Label the tokens with the provider, then decode."""
    labels = list(provider(tokens))
    if len(labels) != len(tokens):
        raise ProviderLengthMismatch(
            f"provider returned {len(labels)} labels for {len(tokens)} tokens"
        )
    return decode_stream(
        LabeledStream(tuple(tokens), tuple(SegLabel(l) for l in labels)), speaker_code
    )


class FileLabelProvider:
    """Reads a labels sidecar: one integer label per line, token-aligned."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def __call__(self, tokens: Sequence[str]) -> list[SegLabel]:
        labels = []
        for line in self.path.read_text("utf-8").splitlines():
            line = line.strip()
            if line:
                labels.append(SegLabel(int(line)))
        return labels
