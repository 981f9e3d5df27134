"""Deterministic toolkit for CHAT transcripts.

Pipeline stages: transcript repair (normalize), utterance segmentation
label codec (segmenter), two-pass text-media alignment (aligner),
UD-based %mor/%gra annotation (morphosyntax), and language sample
measures (analysis), all over the document model in chat.
"""

__version__ = "0.1.0"

from .chat import (
    MainToken,
    Participant,
    TimeInterval,
    TokenKind,
    Transcript,
    Utterance,
    parse_chat,
    serialize_chat,
    validate,
)
from .diagnostics import Diagnostic

__all__ = [
    "Diagnostic",
    "MainToken",
    "Participant",
    "TimeInterval",
    "TokenKind",
    "Transcript",
    "Utterance",
    "parse_chat",
    "serialize_chat",
    "validate",
    "__version__",
]
