"""Deterministic synthesizer checks: structure, spectra, reproducibility."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from tsasr.audio import SAMPLE_RATE
from tsasr.errors import ConfigError, InvalidTranscriptError
from tsasr.synth import (
    SYNTH_PEAK,
    TOKEN_SECONDS,
    WORD_GAP_SECONDS,
    SyntheticSpeaker,
    make_speakers,
    render_utterance,
    token_formants,
)
from tsasr.text import Transcript

TOKEN_SAMPLES = int(TOKEN_SECONDS * SAMPLE_RATE)
GAP_SAMPLES = int(WORD_GAP_SECONDS * SAMPLE_RATE)


def test_render_is_deterministic_in_all_inputs():
    spk = make_speakers(2, seed=0)
    tr = Transcript.from_text("ab cd")
    a = render_utterance(spk[0], tr, seed=5)
    b = render_utterance(spk[0], tr, seed=5)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, render_utterance(spk[0], tr, seed=6).samples)
    assert not np.array_equal(a.samples, render_utterance(spk[1], tr, seed=5).samples)


def test_render_length_formula():
    spk = make_speakers(1, seed=0)[0]
    w = render_utterance(spk, Transcript.from_text("ab c"), seed=1)
    assert len(w) == 3 * TOKEN_SAMPLES + 1 * GAP_SAMPLES


def test_render_peak_normalized_with_headroom():
    spk = make_speakers(1, seed=0)[0]
    w = render_utterance(spk, Transcript.from_text("abc"), seed=2)
    np.testing.assert_allclose(np.max(np.abs(w.samples)), SYNTH_PEAK, atol=1e-12)


def test_word_gaps_are_silent():
    spk = make_speakers(1, seed=0)[0]
    w = render_utterance(spk, Transcript.from_text("a b"), seed=3)
    gap = w.samples[TOKEN_SAMPLES : TOKEN_SAMPLES + GAP_SAMPLES]
    np.testing.assert_array_equal(gap, 0.0)
    assert np.max(np.abs(w.samples[:TOKEN_SAMPLES])) > 0


def test_token_formants_unique_over_vocabulary():
    pairs = {token_formants(t) for t in range(1, 17)}
    assert len(pairs) == 16


def test_render_spectrum_sits_on_harmonics_of_base():
    spk = make_speakers(1, seed=4)[0]
    w = render_utterance(spk, Transcript.from_text("a"), seed=7)
    spec = np.abs(np.fft.rfft(w.samples * np.hanning(len(w))))
    peak_hz = np.argmax(spec) * SAMPLE_RATE / len(w)
    nearest = round(peak_hz / spk.base_freq) * spk.base_freq
    assert abs(peak_hz - nearest) < 15.0


def test_speakers_are_separated_and_reproducible():
    a = make_speakers(8, seed=11)
    b = make_speakers(8, seed=11)
    assert [s.base_freq for s in a] == [s.base_freq for s in b]
    assert [s.speaker_id for s in a] == [f"spk{i:02d}" for i in range(8)]
    bases = sorted(s.base_freq for s in a)
    assert min(b2 - b1 for b1, b2 in zip(bases, bases[1:])) >= 20.0
    assert [s.base_freq for s in make_speakers(8, seed=12)] != [s.base_freq for s in a]


def test_speaker_timbre_validation_and_normalization():
    spk = SyntheticSpeaker("x", 150.0, np.array([2.0, 1.0, 1.0]), 5.0)
    np.testing.assert_allclose(spk.timbre.sum(), 1.0)
    with pytest.raises(ConfigError):
        SyntheticSpeaker("x", 150.0, np.array([1.0, -0.5]), 5.0)
    with pytest.raises(ConfigError):
        SyntheticSpeaker("x", 150.0, np.array([]), 5.0)
    with pytest.raises(ConfigError):
        SyntheticSpeaker("x", 150.0, np.array([0.0, 0.0]), 5.0)


def test_render_rejects_blank_token():
    spk = make_speakers(1, seed=0)[0]
    fake = SimpleNamespace(words=((1, 0),))
    with pytest.raises(InvalidTranscriptError):
        render_utterance(spk, fake, seed=0)
