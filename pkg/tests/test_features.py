"""Front-end checks: framing, mel bank geometry, normalization, SpecAugment."""

from __future__ import annotations

import numpy as np
import pytest

from tsasr.audio import SAMPLE_RATE, Waveform
from tsasr.errors import ConfigError, TooShortError
from tsasr.features import (
    HOP_SAMPLES,
    N_FFT,
    N_MELS,
    WINDOW_SAMPLES,
    SpecAugmentPolicy,
    Spectrogram,
    extract_features,
    filter_center_hz,
    log_mel,
    mel_filterbank,
    n_frames_for,
    spec_augment,
    spectrogram_to_csv,
    stft_magnitude,
)

RNG = np.random.default_rng(20240815)


def test_frame_count_formula():
    assert n_frames_for(WINDOW_SAMPLES) == 1
    assert n_frames_for(WINDOW_SAMPLES + HOP_SAMPLES - 1) == 1
    assert n_frames_for(WINDOW_SAMPLES + HOP_SAMPLES) == 2
    assert n_frames_for(16000) == 98
    with pytest.raises(TooShortError):
        n_frames_for(WINDOW_SAMPLES - 1)


def test_stft_shape_and_tone_peak():
    t = np.arange(16000) / SAMPLE_RATE
    tone = Waveform(0.3 * np.sin(2.0 * np.pi * 1000.0 * t))
    mag = stft_magnitude(tone)
    assert mag.shape == (98, N_FFT // 2 + 1)
    peak_bins = mag.argmax(axis=1)
    assert np.all(peak_bins == round(1000.0 * N_FFT / SAMPLE_RATE))


def test_mel_bank_geometry():
    bank = mel_filterbank()
    assert bank.shape == (N_MELS, N_FFT // 2 + 1)
    assert np.all(bank >= 0.0)
    np.testing.assert_array_equal(bank.max(axis=1), 1.0)
    # interior bins are covered by at least one filter
    assert np.all(bank.sum(axis=0)[1:-1] > 0.0)


def test_mel_bank_rejects_unresolvable_grid():
    with pytest.raises(ConfigError):
        mel_filterbank(n_mels=80, n_fft=64)


def test_filter_centers_increase():
    centers = [filter_center_hz(k) for k in range(N_MELS)]
    assert all(a < b for a, b in zip(centers, centers[1:]))
    assert 0.0 < centers[0] and centers[-1] < 8000.0


def test_log_mel_normalization():
    mag = np.abs(RNG.normal(size=(50, N_FFT // 2 + 1)))
    s = log_mel(mag)
    np.testing.assert_allclose(s.values.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(s.values.var(axis=0), 1.0, rtol=1e-6)
    raw = log_mel(mag, normalize=False)
    assert raw.values.std() != pytest.approx(1.0)


def test_log_mel_constant_input_stays_finite():
    s = log_mel(np.ones((20, N_FFT // 2 + 1)))
    assert np.all(np.isfinite(s.values))
    np.testing.assert_allclose(s.values, 0.0, atol=1e-9)


def test_extract_features_shape():
    w = Waveform(RNG.normal(size=16000) * 0.1)
    s = extract_features(w)
    assert (s.n_frames, s.values.shape[1]) == (98, N_MELS)
    assert s.frame_hop == HOP_SAMPLES / SAMPLE_RATE


def test_spectrogram_validation():
    with pytest.raises(ConfigError):
        Spectrogram(np.zeros((5, 40)))
    bad = np.zeros((5, N_MELS))
    bad[0, 0] = np.nan
    with pytest.raises(ConfigError):
        Spectrogram(bad)


def test_spec_augment_deterministic_and_bounded():
    s = Spectrogram(RNG.normal(size=(100, N_MELS)))
    policy = SpecAugmentPolicy(fill=-7.25)
    a = spec_augment(s, policy, seed=3)
    b = spec_augment(s, policy, seed=3)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, spec_augment(s, policy, seed=4).values)
    assert not np.array_equal(a.values, s.values)  # input untouched, output masked

    filled_cols = np.flatnonzero(np.all(a.values == policy.fill, axis=0))
    filled_rows = np.flatnonzero(np.all(a.values == policy.fill, axis=1))
    assert 1 <= filled_cols.size <= 2 * policy.max_freq_width
    assert 1 <= filled_rows.size <= 2 * policy.max_time_width

    keep_rows = np.setdiff1d(np.arange(100), filled_rows)
    keep_cols = np.setdiff1d(np.arange(N_MELS), filled_cols)
    np.testing.assert_array_equal(
        a.values[np.ix_(keep_rows, keep_cols)], s.values[np.ix_(keep_rows, keep_cols)]
    )


def test_spec_augment_zero_masks_is_identity():
    s = Spectrogram(RNG.normal(size=(30, N_MELS)))
    policy = SpecAugmentPolicy(n_freq_masks=0, n_time_masks=0)
    np.testing.assert_array_equal(spec_augment(s, policy, seed=0).values, s.values)


def test_spec_augment_clips_width_to_grid():
    s = Spectrogram(RNG.normal(size=(5, N_MELS)))  # shorter than max_time_width
    out = spec_augment(s, SpecAugmentPolicy(), seed=1)
    assert out.values.shape == s.values.shape


def test_spec_augment_policy_validation():
    with pytest.raises(ConfigError):
        SpecAugmentPolicy(n_freq_masks=-1)


def test_spectrogram_csv_roundtrip(tmp_path):
    s = Spectrogram(RNG.normal(size=(12, N_MELS)))
    path = tmp_path / "spec.csv"
    spectrogram_to_csv(s, path)
    back = np.loadtxt(path, delimiter=",")
    np.testing.assert_allclose(back, s.values, rtol=1e-6, atol=1e-9)
