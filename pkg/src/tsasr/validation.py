"""Argument-validation helpers shared by the public entry points."""

from __future__ import annotations

import numpy as np

from .audio import Waveform
from .errors import ContractError


def as_waveform(x, name: str = "waveform") -> Waveform:
    """Coerce an array-like or Waveform to a validated Waveform."""
    if isinstance(x, Waveform):
        return x
    try:
        return Waveform(np.asarray(x, dtype=np.float64))
    except (TypeError, ValueError, ContractError) as exc:
        raise ContractError(f"{name} is not audio-like: {exc}") from None


def as_waveform_list(xs, name: str = "auxiliary") -> list[Waveform]:
    """Coerce one waveform or a sequence of them to a non-empty list."""
    if isinstance(xs, Waveform) or (
        hasattr(xs, "ndim") and getattr(xs, "ndim", None) == 1
    ):
        xs = [xs]
    waves = [as_waveform(x, name=f"{name}[{i}]") for i, x in enumerate(xs)]
    if not waves:
        raise ContractError(f"{name} must contain at least one waveform")
    return waves


def positive_int(value, name: str) -> int:
    v = int(value)
    if v <= 0:
        raise ContractError(f"{name} must be a positive integer, got {value!r}")
    return v


def check_fitted(obj, attr: str) -> None:
    if getattr(obj, attr, None) is None:
        raise ContractError(
            f"{type(obj).__name__} is not fitted; call fit() or from_checkpoint() first"
        )
