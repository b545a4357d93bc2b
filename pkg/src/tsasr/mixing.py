"""Overlapped-speech mixture construction and per-utterance augmentations.

Two protocols are provided: power-matched mixing at a requested SNR with
silence padding to the longest component (WSJ0 style), and delayed
summation at original amplitudes with start times at least 0.5 s apart
(LibriSpeech style).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, Waveform
from .errors import ConfigError, ContractError, DegenerateSignalError, ProtocolError

SPEED_FACTORS = (0.95, 0.975, 1.0, 1.025, 1.05)
VOLUME_RANGE = (0.125, 2.0)
MIN_START_GAP_SECONDS = 0.5

_SINC_TAPS_PER_SIDE = 16
_KAISER_BETA = 8.6


def snr_gain(p_target: float, p_interferer: float, snr_db: float) -> float:
    """Gain applied to the interferer so the component SNR equals snr_db."""
    if p_target <= 0 or p_interferer <= 0:
        raise DegenerateSignalError("zero-power signal in SNR computation")
    return float(np.sqrt(p_target / (p_interferer * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(
    target: Waveform,
    interferer: Waveform,
    snr_db: float,
    target_power: float | None = None,
    interferer_power: float | None = None,
) -> tuple:
    """Return (target + gain * interferer, gain).

    Powers default to the mean squared amplitude of each input; callers
    mixing padded components pass the pre-padding powers instead so
    inserted silence does not deflate them.
    """
    if target.sample_rate != interferer.sample_rate:
        raise ContractError("sample rate mismatch between mixture components")
    if len(target) != len(interferer):
        raise ContractError(
            f"component lengths differ: {len(target)} vs {len(interferer)}"
        )
    p_t = target.power() if target_power is None else target_power
    p_i = interferer.power() if interferer_power is None else interferer_power
    gain = snr_gain(p_t, p_i, snr_db)
    return Waveform(target.samples + gain * interferer.samples), gain


def pad_to_length(w: Waveform, total_len: int, rng: np.random.Generator) -> tuple:
    """Zero-pad both ends to total_len; the front share is uniform in [0, deficit].

    Returns (padded waveform, front_pad_samples).
    """
    deficit = total_len - len(w)
    if deficit < 0:
        raise ContractError("waveform longer than the padding target")
    if deficit == 0:
        return w, 0
    front = int(rng.integers(0, deficit + 1))
    samples = np.concatenate(
        [np.zeros(front), w.samples, np.zeros(deficit - front)]
    )
    return Waveform(samples), front


@dataclass(frozen=True)
class Wsj0Mixture:
    mixture: Waveform
    components: tuple  # padded components, target first
    front_pads_sec: tuple  # per component, target first
    snrs_db: tuple  # per interferer
    gains: tuple  # per interferer


def build_wsj0_style(target_utt: Waveform, others: list, snr_db, seed: int) -> Wsj0Mixture:
    """WSJ0-style mixture: pad every component to the longest with a random
    front/back silence split, then sum with power-matched interferer gains.

    `snr_db` is a single value or one value per interferer; powers are
    measured over each utterance's own pre-padding samples.
    """
    if not others:
        raise ProtocolError("at least one interferer required")
    if len(others) > 2:
        raise ProtocolError("at most 2 interferers supported (2-mix / 3-mix)")
    snrs = [float(s) for s in np.atleast_1d(snr_db)]
    if len(snrs) == 1:
        snrs = snrs * len(others)
    if len(snrs) != len(others):
        raise ProtocolError(f"{len(snrs)} SNRs given for {len(others)} interferers")

    rng = np.random.default_rng([seed, 211])
    components = [target_utt, *others]
    powers = [c.power() for c in components]
    total_len = max(len(c) for c in components)

    padded, fronts = [], []
    for c in components:
        p, front = pad_to_length(c, total_len, rng)
        padded.append(p)
        fronts.append(front / SAMPLE_RATE)

    mix = padded[0].samples.copy()
    gains = []
    for intf, p_i, s in zip(padded[1:], powers[1:], snrs):
        g = snr_gain(powers[0], p_i, s)
        mix += g * intf.samples
        gains.append(g)
    return Wsj0Mixture(
        mixture=Waveform(mix),
        components=tuple(padded),
        front_pads_sec=tuple(fronts),
        snrs_db=tuple(snrs),
        gains=tuple(gains),
    )


def sample_start_delays(
    n: int, rng: np.random.Generator, min_gap: float = MIN_START_GAP_SECONDS, max_extra: float = 0.5
) -> list:
    """Start times with consecutive (hence all pairwise) gaps >= min_gap."""
    delays = [0.0]
    for _ in range(n - 1):
        delays.append(delays[-1] + min_gap + float(rng.uniform(0.0, max_extra)))
    return delays


def build_libri_style(utts: list, seed: int, delays: list | None = None) -> tuple:
    """LibriSpeech-style mixture: components summed at original amplitudes,
    shifted so start times differ by at least 0.5 s. Returns (mixture, delays_sec).
    """
    if not 2 <= len(utts) <= 3:
        raise ProtocolError("libri protocol requires 2 or 3 utterances")
    rng = np.random.default_rng([seed, 223])
    if delays is None:
        delays = sample_start_delays(len(utts), rng)
    else:
        delays = [float(d) for d in delays]
        if len(delays) != len(utts):
            raise ProtocolError("one delay per utterance required")

    starts = [int(round(d * SAMPLE_RATE)) for d in delays]
    total = max(s + len(u) for s, u in zip(starts, utts))
    mix = np.zeros(total)
    for start, u in zip(starts, utts):
        mix[start : start + len(u)] += u.samples
    return Waveform(mix), delays


def place_in_timeline(w: Waveform, start_sec: float, total_len: int) -> Waveform:
    """Place a clean source at its mixture offset inside a zero timeline."""
    start = int(round(start_sec * SAMPLE_RATE))
    out = np.zeros(total_len)
    out[start : start + len(w)] = w.samples
    return Waveform(out)


def speed_perturb(w: Waveform, factor: float) -> Waveform:
    """Resample so the output plays `factor` times faster (windowed-sinc,
    Kaiser window, 16 taps per side). factor 1.0 is the exact identity.
    """
    if factor not in SPEED_FACTORS:
        raise ConfigError(f"speed factor {factor} not in {SPEED_FACTORS}")
    if factor == 1.0:
        return Waveform(w.samples.copy(), w.sample_rate)

    n_out = int(round(len(w) / factor))
    positions = np.arange(n_out) * factor
    base = np.floor(positions).astype(int)
    offsets = np.arange(-(_SINC_TAPS_PER_SIDE - 1), _SINC_TAPS_PER_SIDE + 1)
    idx = base[:, None] + offsets[None, :]
    u = positions[:, None] - idx
    taps = np.sinc(u) * _kaiser(u / _SINC_TAPS_PER_SIDE)
    valid = (idx >= 0) & (idx < len(w))
    samples = np.where(valid, w.samples[np.clip(idx, 0, len(w) - 1)], 0.0)
    return Waveform(np.sum(samples * taps, axis=1), w.sample_rate)


def _kaiser(x: np.ndarray) -> np.ndarray:
    inside = np.abs(x) <= 1.0
    arg = np.where(inside, 1.0 - x**2, 0.0)
    return np.where(inside, np.i0(_KAISER_BETA * np.sqrt(arg)) / np.i0(_KAISER_BETA), 0.0)


def volume_perturb(w: Waveform, factor: float) -> Waveform:
    """Scale samples by factor; values beyond [-1, 1] are kept (float pipeline)."""
    lo, hi = VOLUME_RANGE
    if not lo <= factor <= hi:
        raise ConfigError(f"volume factor {factor} outside [{lo}, {hi}]")
    return Waveform(w.samples * factor, w.sample_rate)


def measure_snr_db(target: Waveform, scaled_interferer: Waveform) -> float:
    """Component SNR of an existing mixture decomposition, in dB."""
    return float(10.0 * np.log10(target.power() / scaled_interferer.power()))
