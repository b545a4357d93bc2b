"""Deterministic harmonic speech synthesizer.

Each token is an 80 ms two-formant tone pattern shared across speakers;
what differs per speaker is the harmonic source: fundamental frequency,
relative harmonic amplitudes (timbre) and vibrato. Tokens within a word
are contiguous; words are separated by 40 ms of silence. The rendered
utterance is peak-normalized well below full scale so downstream mixing
has headroom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, Waveform
from .errors import ClippingError, ConfigError, InvalidTranscriptError
from .text import Transcript

TOKEN_SECONDS = 0.08
WORD_GAP_SECONDS = 0.04
SYNTH_PEAK = 0.25

_MAX_HARMONIC_HZ = 6000.0
_FORMANT_BANDWIDTH_HZ = 120.0
_EDGE_SAMPLES = 80  # 5 ms raised-cosine attack/release
_VIBRATO_DEPTH = 0.01


@dataclass(frozen=True)
class SyntheticSpeaker:
    """Harmonic voice: fundamental, normalized harmonic amplitudes, vibrato."""

    speaker_id: str
    base_freq: float
    timbre: np.ndarray
    vibrato_rate: float

    def __post_init__(self):
        timbre = np.asarray(self.timbre, dtype=np.float64)
        if timbre.ndim != 1 or timbre.size == 0:
            raise ConfigError("timbre must be a non-empty 1-D vector")
        if np.any(timbre < 0):
            raise ConfigError("timbre amplitudes must be nonnegative")
        total = float(timbre.sum())
        if total <= 0:
            raise ConfigError("timbre must have positive total amplitude")
        object.__setattr__(self, "timbre", timbre / total)


def token_formants(token: int) -> tuple:
    """Two formant center frequencies uniquely identifying a token (a 4x4 grid)."""
    k = token - 1
    f1 = 450.0 + 170.0 * (k % 4)
    f2 = 1400.0 + 320.0 * (k // 4)
    return f1, f2


def make_speakers(n: int, seed: int, min_spacing_hz: float = 20.0) -> list:
    """Deterministic speaker bank with base frequencies spaced >= min_spacing_hz."""
    rng = np.random.default_rng([seed, 101])
    speakers = []
    step = min_spacing_hz + 8.0
    for i in range(n):
        base = 120.0 + step * i + rng.uniform(-3.0, 3.0)
        n_harm = int(_MAX_HARMONIC_HZ // base)
        decay = rng.uniform(0.6, 1.4)
        timbre = (np.arange(1, n_harm + 1) ** -decay) * (0.5 + rng.random(n_harm))
        speakers.append(
            SyntheticSpeaker(
                speaker_id=f"spk{i:02d}",
                base_freq=base,
                timbre=timbre,
                vibrato_rate=float(rng.uniform(4.0, 7.0)),
            )
        )
    bases = sorted(s.base_freq for s in speakers)
    if any(b2 - b1 < min_spacing_hz for b1, b2 in zip(bases, bases[1:])):
        raise ConfigError("speaker base frequencies closer than the minimum spacing")
    return speakers


def _render_token(speaker: SyntheticSpeaker, token: int, rng: np.random.Generator) -> np.ndarray:
    n = int(round(TOKEN_SECONDS * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    f1, f2 = token_formants(token)

    harmonics = np.arange(1, speaker.timbre.size + 1)
    freqs = harmonics * speaker.base_freq
    resonance = 1.0 / (1.0 + ((freqs - f1) / _FORMANT_BANDWIDTH_HZ) ** 2)
    resonance += 1.0 / (1.0 + ((freqs - f2) / _FORMANT_BANDWIDTH_HZ) ** 2)
    gains = speaker.timbre * resonance

    phases = rng.uniform(0.0, 2.0 * np.pi, size=freqs.size)
    # sinusoidal FM: phase deviation depth*f_k/rate * sin(2*pi*rate*t) per harmonic
    vib_gain = _VIBRATO_DEPTH * freqs / speaker.vibrato_rate
    vib_t = np.sin(2.0 * np.pi * speaker.vibrato_rate * t)
    # args shape (n_harmonics, n): per-harmonic instantaneous phase
    args = 2.0 * np.pi * freqs[:, None] * t[None, :] + vib_gain[:, None] * vib_t[None, :]
    args += phases[:, None]
    sig = gains @ np.sin(args)

    sig *= 0.9 + 0.2 * rng.random()
    env = np.ones(n)
    ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(_EDGE_SAMPLES) / _EDGE_SAMPLES))
    env[:_EDGE_SAMPLES] = ramp
    env[-_EDGE_SAMPLES:] = ramp[::-1]
    return sig * env


def render_utterance(speaker: SyntheticSpeaker, transcript: Transcript, seed: int) -> Waveform:
    """Render a transcript as audio. Deterministic in (speaker, transcript, seed).

    Output length is exactly n_tokens * 80 ms + (n_words - 1) * 40 ms.
    """
    if any(t == 0 for w in transcript.words for t in w):
        raise InvalidTranscriptError("transcript contains the blank index 0")
    rng = np.random.default_rng([seed, 7919])
    gap = np.zeros(int(round(WORD_GAP_SECONDS * SAMPLE_RATE)))
    pieces = []
    for wi, word in enumerate(transcript.words):
        if wi > 0:
            pieces.append(gap)
        for token in word:
            pieces.append(_render_token(speaker, token, rng))
    samples = np.concatenate(pieces)
    peak = float(np.max(np.abs(samples)))
    if peak > 0:
        samples = samples * (SYNTH_PEAK / peak)
    if np.max(np.abs(samples)) > 1.0:
        raise ClippingError("synthesized utterance exceeds full scale")
    return Waveform(samples)
