"""Token vocabulary and transcripts.

The vocabulary is 16 symbols ('a'..'p') indexed 1..16; index 0 is reserved
for the CTC blank. A transcript groups tokens into words; words are the
scoring unit for WER and are rendered with a 40 ms gap between them.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidTranscriptError

BLANK = 0
VOCAB_SIZE = 16
SYMBOLS = "abcdefghijklmnop"


def token_to_char(token: int) -> str:
    if not 1 <= token <= VOCAB_SIZE:
        raise InvalidTranscriptError(f"token index {token} outside [1, {VOCAB_SIZE}]")
    return SYMBOLS[token - 1]


def char_to_token(ch: str) -> int:
    idx = SYMBOLS.find(ch)
    if idx < 0:
        raise InvalidTranscriptError(f"unknown symbol {ch!r}")
    return idx + 1


@dataclass(frozen=True)
class Transcript:
    """Token sequence with word grouping. `words` is a tuple of token tuples."""

    words: tuple

    def __post_init__(self):
        words = tuple(tuple(int(t) for t in w) for w in self.words)
        if not words or any(len(w) == 0 for w in words):
            raise InvalidTranscriptError("transcript must contain non-empty words")
        for w in words:
            for t in w:
                if not 1 <= t <= VOCAB_SIZE:
                    raise InvalidTranscriptError(
                        f"token index {t} outside [1, {VOCAB_SIZE}] (0 is the blank)"
                    )
        object.__setattr__(self, "words", words)

    @property
    def tokens(self) -> tuple:
        return tuple(t for w in self.words for t in w)

    @property
    def text(self) -> str:
        return " ".join("".join(token_to_char(t) for t in w) for w in self.words)

    @classmethod
    def from_text(cls, text: str) -> "Transcript":
        words = tuple(tuple(char_to_token(c) for c in w) for w in text.split())
        if not words:
            raise InvalidTranscriptError("empty transcript text")
        return cls(words)

    @classmethod
    def from_tokens(cls, tokens) -> "Transcript":
        """Single-word transcript from a flat token sequence."""
        return cls((tuple(tokens),))

    def __len__(self) -> int:
        return len(self.tokens)
