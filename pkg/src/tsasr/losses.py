"""Training objectives: CTC with exact forward-backward gradients, the
scale-invariant spectrogram reconstruction loss, and their weighted sum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    ConfigError,
    ContractError,
    DegenerateReferenceError,
    InfeasibleAlignmentError,
    InvalidTranscriptError,
    ShapeError,
)

BLANK = 0

SISNR_EPS = 1e-8
SISNR_CLAMP_DB = 40.0
# keeps log() off ratio == 0 exactly; any ratio this small is far below the
# -40 dB clamp already, so clamped outputs are unchanged
_RATIO_FLOOR = 1e-30


def min_frames_for(labels) -> int:
    """Shortest frame count admitting an alignment: every label plus one
    blank wedged between each adjacent repeat."""
    labels = list(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _validate_labels(labels, n_classes: int) -> np.ndarray:
    arr = np.asarray(list(labels), dtype=np.int64)
    if arr.size == 0:
        raise InvalidTranscriptError("CTC labels must be nonempty")
    if arr.min() < 1 or arr.max() >= n_classes:
        raise InvalidTranscriptError(
            f"labels must lie in [1, {n_classes - 1}]; blank (0) is reserved"
        )
    return arr


def ctc_loss(log_probs: Tensor, labels) -> Tensor:
    """Negative log-likelihood of `labels` under the CTC path distribution.

    `log_probs` is a (T, n_classes) grid of per-frame log scores with blank at
    index 0. The forward-backward recursion runs in float64 log space over the
    blank-augmented label sequence, and the whole loss is one autodiff
    primitive: the gradient w.r.t. log_probs comes from the alpha-beta
    posteriors rather than from differentiating through the recursion.
    """
    log_probs = ad.as_tensor(log_probs)
    if log_probs.ndim != 2:
        raise ShapeError("ctc_loss", log_probs.shape)
    t_len, n_classes = log_probs.shape
    arr = _validate_labels(labels, n_classes)
    need = min_frames_for(arr)
    if t_len < need:
        raise InfeasibleAlignmentError(
            f"{len(arr)} labels need at least {need} frames, got {t_len}"
        )

    lp = log_probs.data.astype(np.float64)
    ext = np.zeros(2 * len(arr) + 1, dtype=np.int64)
    ext[1::2] = arr
    s_len = len(ext)
    # a skip s-2 -> s is legal only onto a fresh non-blank label
    allow_skip = np.zeros(s_len, dtype=bool)
    allow_skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])

    lp_ext = lp[:, ext]  # (T, S)
    neg_inf = -np.inf

    def shift_up(x, k):
        return np.concatenate([np.full(k, neg_inf), x[:-k]])

    def shift_down(x, k):
        return np.concatenate([x[k:], np.full(k, neg_inf)])

    alpha = np.full((t_len, s_len), neg_inf)
    alpha[0, 0] = lp_ext[0, 0]
    if s_len > 1:
        alpha[0, 1] = lp_ext[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        acc = np.logaddexp(prev, shift_up(prev, 1))
        acc = np.where(allow_skip, np.logaddexp(acc, shift_up(prev, 2)), acc)
        alpha[t] = lp_ext[t] + acc

    if s_len > 1:
        log_lik = np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    else:
        log_lik = alpha[-1, -1]
    if not np.isfinite(log_lik):
        raise ContractError("CTC path likelihood vanished (all-zero probability rows?)")

    beta = np.full((t_len, s_len), neg_inf)
    beta[-1, -1] = lp_ext[-1, -1]
    if s_len > 1:
        beta[-1, -2] = lp_ext[-1, -2]
    allow_from = np.zeros(s_len, dtype=bool)
    allow_from[:-2] = allow_skip[2:]
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1]
        acc = np.logaddexp(nxt, shift_down(nxt, 1))
        acc = np.where(allow_from, np.logaddexp(acc, shift_down(nxt, 2)), acc)
        beta[t] = lp_ext[t] + acc

    # alpha and beta both include the frame-t emission, so divide it out once
    ab = alpha + beta
    with np.errstate(invalid="ignore"):
        post = np.where(np.isfinite(ab), np.exp(ab - lp_ext - log_lik), 0.0)

    grad = np.zeros_like(lp)
    np.add.at(grad, (np.arange(t_len)[:, None], ext[None, :]), post)
    grad = -grad.astype(log_probs.dtype)

    def pullback(g):
        return (g * grad,)

    return ad.make_node(
        np.asarray(-log_lik, dtype=log_probs.dtype), (log_probs,), pullback, "ctc_loss"
    )


def sisnr(est: Tensor, ref: Tensor) -> Tensor:
    """Scale-invariant SNR of `est` against `ref` in dB, clamped to ±40.

    Both inputs are mean-removed, `est` is projected onto `ref`, and the
    projected-to-residual energy ratio is reported as 10·log10(⟨s,s⟩ /
    (⟨e,e⟩ + 1e-8)). Invariant to scaling of est and to constant offsets of
    either argument.
    """
    est, ref = ad.as_tensor(est), ad.as_tensor(ref)
    if est.ndim != 1 or ref.ndim != 1 or est.shape != ref.shape:
        raise ShapeError("sisnr", est.shape, ref.shape)
    if est.shape[0] < 2:
        raise ContractError("sisnr needs vectors of length >= 2")
    if np.ptp(ref.data) == 0.0:
        raise DegenerateReferenceError("reference signal is constant")

    a = est - ad.mean(est)
    b = ref - ad.mean(ref)
    coeff = ad.sum_(a * b) / ad.sum_(b * b)
    s = coeff * b
    e = a - s
    ratio = ad.sum_(s * s) / (ad.sum_(e * e) + SISNR_EPS)
    db = (10.0 / math.log(10.0)) * ad.log(ad.clip(ratio, _RATIO_FLOOR, np.inf))
    return ad.clip(db, -SISNR_CLAMP_DB, SISNR_CLAMP_DB)


def spectrogram_loss(est_spec: Tensor, true_spec) -> Tensor:
    """Negated SiSNR between flattened estimated and reference spectrograms."""
    est_spec = ad.as_tensor(est_spec)
    true_vals = np.asarray(getattr(true_spec, "values", true_spec))
    if est_spec.shape != true_vals.shape:
        raise ShapeError("spectrogram_loss", est_spec.shape, true_vals.shape)
    flat_est = ad.reshape(est_spec, (est_spec.data.size,))
    flat_ref = Tensor(true_vals.reshape(-1))
    return -sisnr(flat_est, flat_ref)


@dataclass(frozen=True)
class LossWeights:
    w_ctc: float = 1.0
    w_spec: float = 0.1

    def __post_init__(self):
        if self.w_ctc < 0 or self.w_spec < 0 or self.w_ctc + self.w_spec <= 0:
            raise ConfigError("loss weights must be nonnegative and not all zero")


def combined_loss(ctc: Tensor, spec: Tensor | None, weights: LossWeights) -> Tensor:
    """w_ctc·ctc + w_spec·spec; `spec` may be omitted only when its weight is 0."""
    out = weights.w_ctc * ad.as_tensor(ctc)
    if weights.w_spec != 0.0:
        if spec is None:
            raise ContractError("w_spec > 0 but no spectrogram loss supplied")
        out = out + weights.w_spec * ad.as_tensor(spec)
    return out
