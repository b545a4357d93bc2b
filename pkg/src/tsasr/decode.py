"""Greedy CTC decoding and word-error-rate scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UndefinedWerError
from .text import BLANK, Transcript, token_to_char


@dataclass(frozen=True)
class Hypothesis:
    """Collapsed greedy decode of one utterance.

    `tokens` are the non-blank labels after merging adjacent repeats;
    `frame_alignment[i]` is the first frame that emitted `tokens[i]`;
    `frame_posteriors` are per-frame class probabilities (rows sum to 1).
    """

    tokens: tuple
    frame_alignment: tuple
    frame_posteriors: np.ndarray

    @property
    def words(self) -> tuple:
        # scoring treats every decoded token as its own word; desk corpora use
        # single-token words so references segment identically
        return tuple((t,) for t in self.tokens)

    @property
    def text(self) -> str:
        return " ".join(token_to_char(t) for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


def greedy_decode(log_probs) -> Hypothesis:
    """Per-frame argmax, merge adjacent repeats, drop blanks."""
    lp = np.asarray(getattr(log_probs, "data", log_probs), dtype=np.float64)
    if lp.ndim != 2:
        raise ShapeError("greedy_decode", lp.shape)
    path = lp.argmax(axis=1)
    tokens, frames = [], []
    prev = BLANK
    for t, lab in enumerate(path):
        if lab != BLANK and lab != prev:
            tokens.append(int(lab))
            frames.append(t)
        prev = lab
    return Hypothesis(
        tokens=tuple(tokens),
        frame_alignment=tuple(frames),
        frame_posteriors=np.exp(lp),
    )


@dataclass(frozen=True)
class WerReport:
    substitutions: int
    insertions: int
    deletions: int
    n_ref_words: int

    @property
    def n_errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer_percent(self) -> float:
        return 100.0 * self.n_errors / self.n_ref_words

    def to_dict(self) -> dict:
        return {
            "wer": self.wer_percent,
            "S": self.substitutions,
            "I": self.insertions,
            "D": self.deletions,
            "n_words": self.n_ref_words,
        }


def _words_of(x) -> tuple:
    if isinstance(x, Transcript):
        return x.words
    if isinstance(x, Hypothesis):
        return x.words
    return tuple(tuple(w) for w in x)


def wer(ref, hyp) -> WerReport:
    """Word-level Levenshtein alignment with unit costs.

    Ties prefer substitution over a deletion+insertion pair, then deletion
    over insertion, so reported counts are deterministic.
    """
    ref_words = _words_of(ref)
    hyp_words = _words_of(hyp)
    if not ref_words:
        raise UndefinedWerError("WER needs a nonempty reference")

    n, m = len(ref_words), len(hyp_words)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            same = ref_words[i - 1] == hyp_words[j - 1]
            dist[i, j] = min(
                dist[i - 1, j - 1] + (0 if same else 1),
                dist[i - 1, j] + 1,
                dist[i, j - 1] + 1,
            )

    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (
            0 if ref_words[i - 1] == hyp_words[j - 1] else 1
        ):
            if ref_words[i - 1] != hyp_words[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return WerReport(substitutions=subs, insertions=ins, deletions=dels, n_ref_words=n)
