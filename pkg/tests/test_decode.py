"""Greedy decoding and WER scoring against small worked examples."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsasr.decode import Hypothesis, WerReport, greedy_decode, wer
from tsasr.errors import ShapeError, UndefinedWerError
from tsasr.text import Transcript

from oracles import collapse, edit_distance_recursive


def lp_for_path(path, n_classes: int = 4) -> np.ndarray:
    """Log-prob grid whose per-frame argmax follows `path`."""
    lp = np.full((len(path), n_classes), np.log(0.1 / (n_classes - 1)))
    for t, lab in enumerate(path):
        lp[t, lab] = np.log(0.9)
    return lp


def test_collapse_merges_repeats_and_drops_blanks():
    hyp = greedy_decode(lp_for_path([1, 1, 0, 2]))
    assert hyp.tokens == (1, 2)
    assert hyp.text == "a b"
    assert hyp.frame_alignment == (0, 3)


def test_collapse_blank_separated_repeat_survives():
    hyp = greedy_decode(lp_for_path([1, 0, 1]))
    assert hyp.tokens == (1, 1)
    assert hyp.text == "a a"


def test_all_blank_decodes_empty():
    hyp = greedy_decode(lp_for_path([0, 0, 0]))
    assert hyp.tokens == ()
    assert hyp.text == ""
    assert len(hyp) == 0


def test_decode_posteriors_and_words():
    hyp = greedy_decode(lp_for_path([2, 3]))
    np.testing.assert_allclose(hyp.frame_posteriors.sum(axis=1), 1.0, atol=1e-12)
    assert hyp.words == ((2,), (3,))


def test_decode_rejects_wrong_rank():
    with pytest.raises(ShapeError):
        greedy_decode(np.zeros(5))


@given(st.lists(st.integers(0, 3), min_size=1, max_size=12))
@settings(max_examples=60, deadline=None)
def test_decode_matches_collapse_oracle(path):
    hyp = greedy_decode(lp_for_path(path))
    assert hyp.tokens == collapse(path)


# -- WER ---------------------------------------------------------------------

def test_wer_worked_examples():
    ref = Transcript.from_text("a b c")
    assert wer(ref, Transcript.from_text("a b c")).wer_percent == 0.0
    one_sub = wer(ref, Transcript.from_text("a d c"))
    assert (one_sub.substitutions, one_sub.insertions, one_sub.deletions) == (1, 0, 0)
    np.testing.assert_allclose(one_sub.wer_percent, 100.0 / 3.0)
    all_wrong = wer(ref, Transcript.from_text("d e f"))
    assert all_wrong.wer_percent == 100.0


def test_wer_can_exceed_hundred_percent():
    report = wer(Transcript.from_text("a"), Transcript.from_text("b c d"))
    assert report.n_errors == 3
    assert report.wer_percent == 300.0


def test_wer_tie_breaks_substitution_then_deletion():
    # equal-length mismatch resolves as substitutions, never del+ins pairs
    r = wer(Transcript.from_text("a b"), Transcript.from_text("c d"))
    assert (r.substitutions, r.deletions, r.insertions) == (2, 0, 0)
    # pure length deficit resolves as deletions
    r = wer(Transcript.from_text("a b c"), Transcript.from_text("a"))
    assert (r.substitutions, r.deletions, r.insertions) == (0, 2, 0)
    r = wer(Transcript.from_text("a"), Transcript.from_text("a b c"))
    assert (r.substitutions, r.deletions, r.insertions) == (0, 0, 2)


def test_wer_accepts_hypothesis_and_plain_sequences():
    hyp = greedy_decode(lp_for_path([1, 0, 2]))
    report = wer(Transcript.from_text("a b"), hyp)
    assert report.n_errors == 0
    assert wer([(1,), (2,)], [(1,), (3,)]).substitutions == 1


def test_wer_empty_hypothesis_is_all_deletions():
    r = wer(Transcript.from_text("a b c"), [])
    assert (r.substitutions, r.deletions, r.insertions) == (0, 3, 0)


def test_wer_undefined_for_empty_reference():
    with pytest.raises(UndefinedWerError):
        wer([], [(1,)])


@given(
    st.lists(st.integers(1, 4), min_size=1, max_size=6),
    st.lists(st.integers(1, 4), min_size=0, max_size=6),
)
@settings(max_examples=100, deadline=None)
def test_wer_distance_matches_recursive_oracle(ref_tokens, hyp_tokens):
    ref = [(t,) for t in ref_tokens]
    hyp = [(t,) for t in hyp_tokens]
    assert wer(ref, hyp).n_errors == edit_distance_recursive(tuple(ref), tuple(hyp))


def test_report_dict_fields():
    d = WerReport(substitutions=1, insertions=2, deletions=3, n_ref_words=10).to_dict()
    assert d == {"wer": 60.0, "S": 1, "I": 2, "D": 3, "n_words": 10}
