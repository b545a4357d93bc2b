"""Mono waveform container and WAV file I/O (16 kHz float pipeline)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import ContractError

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class Waveform:
    """Mono audio. Samples are float64 in memory; files may be float32 or int16.

    Values outside [-1, 1] are legal for mixtures (float pipeline, no
    clamping); synthesis enforces its own peak bound separately.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ContractError(f"waveform must be 1-D, got shape {samples.shape}")
        if samples.size == 0:
            raise ContractError("waveform must be non-empty")
        if not np.all(np.isfinite(samples)):
            raise ContractError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def power(self) -> float:
        """Mean squared amplitude over all samples."""
        return float(np.mean(self.samples**2))


def write_wav(path, w: Waveform, dtype: str = "float32") -> None:
    """Write a mono WAV file as PCM float32 (default) or int16."""
    if dtype == "float32":
        wavfile.write(path, w.sample_rate, w.samples.astype(np.float32))
    elif dtype == "int16":
        scaled = np.clip(w.samples, -1.0, 1.0) * 32767.0
        wavfile.write(path, w.sample_rate, scaled.astype(np.int16))
    else:
        raise ContractError(f"unsupported WAV dtype {dtype!r}")


def read_wav(path) -> Waveform:
    """Read a mono WAV file; int16 is rescaled to [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ContractError(f"expected mono WAV, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32767.0
    else:
        samples = data.astype(np.float64)
    return Waveform(samples, sample_rate=int(rate))
