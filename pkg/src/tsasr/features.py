"""Log-Mel front end and SpecAugment.

Framing is 25 ms windows every 10 ms (400/160 samples at 16 kHz), Hann
window, 512-point FFT, 80 triangular mel filters spanning 0-8000 Hz.
Features are natural-log energies, mean/variance normalized per utterance
and per mel bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, Waveform
from .errors import ConfigError, TooShortError

N_FFT = 512
WINDOW_SAMPLES = 400
HOP_SAMPLES = 160
N_MELS = 80
LOG_EPS = 1e-10
_NORM_VAR_EPS = 1e-8


@dataclass(frozen=True)
class Spectrogram:
    """Time x mel grid of log energies plus its framing metadata."""

    values: np.ndarray
    frame_hop: float = HOP_SAMPLES / SAMPLE_RATE
    frame_window: float = WINDOW_SAMPLES / SAMPLE_RATE
    n_mels: int = N_MELS

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != self.n_mels:
            raise ConfigError(f"spectrogram must be (frames, {self.n_mels}), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ConfigError("spectrogram contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def n_frames_for(n_samples: int) -> int:
    """1 + floor((len - window) / hop); requires at least one full window."""
    if n_samples < WINDOW_SAMPLES:
        raise TooShortError(
            f"waveform of {n_samples} samples shorter than one {WINDOW_SAMPLES}-sample window"
        )
    return 1 + (n_samples - WINDOW_SAMPLES) // HOP_SAMPLES


def stft_magnitude(w: Waveform) -> np.ndarray:
    """Magnitude spectrogram, shape (frames, 257). Hann window, no padding."""
    n = len(w)
    frames = n_frames_for(n)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(WINDOW_SAMPLES) / WINDOW_SAMPLES)
    starts = np.arange(frames) * HOP_SAMPLES
    segments = w.samples[starts[:, None] + np.arange(WINDOW_SAMPLES)[None, :]]
    return np.abs(np.fft.rfft(segments * window, n=N_FFT, axis=1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = N_MELS, n_fft: int = N_FFT, f_min: float = 0.0, f_max: float = 8000.0
) -> np.ndarray:
    """Triangular mel bank, shape (n_mels, n_fft//2 + 1), each row peaking at 1."""
    bin_freqs = np.arange(n_fft // 2 + 1) * SAMPLE_RATE / n_fft
    mel_points = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bank = np.zeros((n_mels, bin_freqs.size))
    for k in range(n_mels):
        left, center, right = hz_points[k], hz_points[k + 1], hz_points[k + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        tri = np.maximum(0.0, np.minimum(up, down))
        peak = tri.max()
        if peak <= 0:
            raise ConfigError(f"mel filter {k} has empty support for n_fft={n_fft}")
        bank[k] = tri / peak
    return bank


def filter_center_hz(k: int, n_mels: int = N_MELS, f_min: float = 0.0, f_max: float = 8000.0) -> float:
    mel_points = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    return float(mel_to_hz(mel_points[k + 1]))


_BANK_CACHE: dict = {}


def _bank() -> np.ndarray:
    key = (N_MELS, N_FFT)
    if key not in _BANK_CACHE:
        _BANK_CACHE[key] = mel_filterbank()
    return _BANK_CACHE[key]


def mel_energies(magnitude: np.ndarray) -> np.ndarray:
    """Pre-log mel energies of a magnitude grid (linear in signal power)."""
    return (magnitude.astype(np.float64) ** 2) @ _bank().T


def log_mel(magnitude: np.ndarray, normalize: bool = True) -> Spectrogram:
    """ln(mel power + eps), optionally mean/variance normalized per mel bin."""
    values = np.log(mel_energies(magnitude) + LOG_EPS)
    if normalize:
        mean = values.mean(axis=0, keepdims=True)
        std = np.sqrt(values.var(axis=0, keepdims=True) + _NORM_VAR_EPS)
        values = (values - mean) / std
    return Spectrogram(values)


def extract_features(w: Waveform, normalize: bool = True) -> Spectrogram:
    return log_mel(stft_magnitude(w), normalize=normalize)


@dataclass(frozen=True)
class SpecAugmentPolicy:
    """Mask counts and maximum widths; fill value 0 is the post-normalization mean."""

    n_freq_masks: int = 2
    max_freq_width: int = 12
    n_time_masks: int = 2
    max_time_width: int = 20
    fill: float = 0.0

    def __post_init__(self):
        if min(self.n_freq_masks, self.max_freq_width, self.n_time_masks, self.max_time_width) < 0:
            raise ConfigError("SpecAugment counts and widths must be nonnegative")


def spec_augment(s: Spectrogram, policy: SpecAugmentPolicy, seed: int) -> Spectrogram:
    """Apply random frequency and time stripes, deterministic per seed.

    Stripe widths are uniform in [1, max_width] (clipped to the grid), so a
    configured mask always blanks at least one row or column.
    """
    rng = np.random.default_rng([seed, 401])
    values = s.values.copy()
    n_frames, n_mels = values.shape
    for _ in range(policy.n_freq_masks):
        width = _sample_width(rng, policy.max_freq_width, n_mels)
        if width == 0:
            continue
        start = int(rng.integers(0, n_mels - width + 1))
        values[:, start : start + width] = policy.fill
    for _ in range(policy.n_time_masks):
        width = _sample_width(rng, policy.max_time_width, n_frames)
        if width == 0:
            continue
        start = int(rng.integers(0, n_frames - width + 1))
        values[start : start + width, :] = policy.fill
    return Spectrogram(values, s.frame_hop, s.frame_window, s.n_mels)


def _sample_width(rng: np.random.Generator, max_width: int, limit: int) -> int:
    max_width = min(max_width, limit)
    if max_width <= 0:
        return 0
    return int(rng.integers(1, max_width + 1))


def spectrogram_to_csv(s: Spectrogram, path) -> None:
    """Write the grid as CSV, one frame per row, n_mels columns."""
    np.savetxt(path, s.values, delimiter=",", fmt="%.8g")
