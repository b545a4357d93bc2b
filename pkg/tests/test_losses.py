"""CTC, SiSNR, spectrogram and combined loss checks against oracles."""

from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest

import tsasr.autodiff as ad
from tsasr.autodiff import Tensor
from tsasr.errors import (
    ConfigError,
    ContractError,
    DegenerateReferenceError,
    InfeasibleAlignmentError,
    InvalidTranscriptError,
    ShapeError,
)
from tsasr.losses import (
    LossWeights,
    combined_loss,
    ctc_loss,
    min_frames_for,
    sisnr,
    spectrogram_loss,
)

from fdcheck import check_grads
from oracles import ctc_loss_bruteforce

RNG = np.random.default_rng(20240812)


def random_log_probs(t_len: int, n_classes: int, rng) -> np.ndarray:
    z = rng.normal(size=(t_len, n_classes)) * 2.0
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


# -- CTC ---------------------------------------------------------------------

def test_min_frames_for():
    assert min_frames_for([1]) == 1
    assert min_frames_for([1, 2]) == 2
    assert min_frames_for([1, 1]) == 3
    assert min_frames_for([1, 1, 1]) == 5
    assert min_frames_for([1, 2, 2, 3]) == 5


def test_ctc_single_frame_single_label():
    lp = np.log(np.array([[0.3, 0.7]]))
    loss = ctc_loss(Tensor(lp), [1])
    assert loss.shape == ()
    np.testing.assert_allclose(loss.item(), -math.log(0.7), atol=1e-12)


def test_ctc_two_frames_single_label():
    p = np.array([[0.4, 0.6], [0.25, 0.75]])
    loss = ctc_loss(Tensor(np.log(p)), [1])
    # paths collapsing to "a": aa, a-, -a
    total = p[0, 1] * p[1, 1] + p[0, 1] * p[1, 0] + p[0, 0] * p[1, 1]
    np.testing.assert_allclose(loss.item(), -math.log(total), atol=1e-12)


def test_ctc_three_frames_repeated_label():
    p = np.array([[0.2, 0.8], [0.9, 0.1], [0.3, 0.7]])
    loss = ctc_loss(Tensor(np.log(p)), [1, 1])
    # a repeated label forces the single path a, blank, a
    np.testing.assert_allclose(
        loss.item(), -math.log(p[0, 1] * p[1, 0] * p[2, 1]), atol=1e-12
    )


def test_ctc_matches_bruteforce_spot_checks():
    rng = np.random.default_rng(99)
    for _ in range(25):
        t_len = int(rng.integers(1, 7))
        n_classes = int(rng.integers(2, 5))
        max_labels = min(3, t_len)
        labels = rng.integers(1, n_classes, size=int(rng.integers(1, max_labels + 1)))
        if min_frames_for(labels) > t_len:
            continue
        lp = random_log_probs(t_len, n_classes, rng)
        got = ctc_loss(Tensor(lp), labels).item()
        want = ctc_loss_bruteforce(lp, labels)
        np.testing.assert_allclose(got, want, atol=1e-9, rtol=0)


def test_ctc_gradient_finite_differences():
    rng = np.random.default_rng(3)
    lp = random_log_probs(5, 4, rng)  # |V| = 3
    labels = [2, 1]
    assert check_grads(lambda x: ctc_loss(x, labels), [lp]) < 1e-6


def test_ctc_gradient_sums_to_zero_through_logits():
    # expressed w.r.t. logits, each frame's gradient sums to zero
    rng = np.random.default_rng(4)
    z = Tensor(rng.normal(size=(6, 5)), requires_grad=True)
    ctc_loss(ad.log_softmax(z, axis=-1), [1, 3, 3]).backward()
    np.testing.assert_allclose(z.grad.sum(axis=1), 0.0, atol=1e-12)


def test_ctc_gradient_is_negative_posterior():
    # sanity on the analytic gradient's sign and magnitude
    lp = Tensor(random_log_probs(4, 3, np.random.default_rng(5)), requires_grad=True)
    ctc_loss(lp, [1, 2]).backward()
    assert np.all(lp.grad <= 1e-15)
    assert np.all(lp.grad >= -1.0 - 1e-12)


def test_ctc_infeasible_and_invalid_labels():
    lp = Tensor(random_log_probs(2, 3, RNG))
    with pytest.raises(InfeasibleAlignmentError):
        ctc_loss(lp, [1, 1])  # needs 3 frames
    with pytest.raises(InfeasibleAlignmentError):
        ctc_loss(lp, [1, 2, 1])
    with pytest.raises(InvalidTranscriptError):
        ctc_loss(lp, [])
    with pytest.raises(InvalidTranscriptError):
        ctc_loss(lp, [0, 1])  # blank in the labels
    with pytest.raises(InvalidTranscriptError):
        ctc_loss(lp, [3])  # out of vocabulary


def test_ctc_loss_scales_under_weighting():
    lp = Tensor(random_log_probs(4, 3, np.random.default_rng(8)), requires_grad=True)
    (2.5 * ctc_loss(lp, [1])).backward()
    g1 = lp.grad.copy()
    lp.zero_grad()
    ctc_loss(lp, [1]).backward()
    np.testing.assert_allclose(g1, 2.5 * lp.grad, rtol=1e-14, atol=0)


# -- SiSNR ---------------------------------------------------------------------

def _orthogonal_noise(ref: np.ndarray, rng) -> np.ndarray:
    """Zero-mean unit noise orthogonal to the centered reference."""
    b = ref - ref.mean()
    u = rng.normal(size=ref.shape)
    u -= u.mean()
    u -= (u @ b) / (b @ b) * b
    return u / np.sqrt(u @ u)


def test_sisnr_perfect_reconstruction_hits_ceiling():
    ref = np.array([0.5, -1.0, 2.0, 0.25, -0.75])
    assert sisnr(Tensor(ref.copy()), Tensor(ref)).item() == 40.0
    assert sisnr(Tensor(3.0 * ref), Tensor(ref)).item() == 40.0


def test_sisnr_orthogonal_estimate_hits_floor():
    ref = Tensor(np.array([1.0, -1.0, 1.0, -1.0]))
    est = Tensor(np.array([1.0, 1.0, -1.0, -1.0]))  # exactly orthogonal, zero-mean
    assert sisnr(est, ref).item() == -40.0


def test_sisnr_matches_high_precision_formula():
    # fixed 8-element pair: est = ref + 0.1 * orthogonal unit noise
    ref = np.array([0.3, -1.2, 0.8, 2.0, -0.5, 1.1, -2.2, 0.7])
    noise = _orthogonal_noise(ref, np.random.default_rng(11))
    est = ref + 0.1 * noise

    got = sisnr(Tensor(est), Tensor(ref)).item()

    with mpmath.workdps(50):
        a = [mpmath.mpf(v) for v in est]
        b = [mpmath.mpf(v) for v in ref]
        ma = sum(a) / len(a)
        mb = sum(b) / len(b)
        a = [v - ma for v in a]
        b = [v - mb for v in b]
        dot_ab = sum(x * y for x, y in zip(a, b))
        dot_bb = sum(x * x for x in b)
        s = [dot_ab / dot_bb * x for x in b]
        e = [x - y for x, y in zip(a, s)]
        ss = sum(x * x for x in s)
        ee = sum(x * x for x in e)
        want = float(10 * mpmath.log(ss / (ee + mpmath.mpf("1e-8")), 10))
    np.testing.assert_allclose(got, want, atol=1e-9, rtol=0)


def test_sisnr_scale_invariance_within_tolerance():
    rng = np.random.default_rng(21)
    ref = rng.normal(size=1000) * 2.0
    est = ref + rng.normal(size=1000) * 1.6  # residual energy >> eps
    base = sisnr(Tensor(est), Tensor(ref)).item()
    for alpha in (0.5, 2.0, 10.0, -1.0):
        scaled = sisnr(Tensor(alpha * est), Tensor(ref)).item()
        assert abs(scaled - base) < 1e-9, f"alpha={alpha}"


def test_sisnr_offset_invariance():
    rng = np.random.default_rng(22)
    ref = rng.normal(size=500)
    est = ref + rng.normal(size=500) * 0.9
    base = sisnr(Tensor(est), Tensor(ref)).item()
    for c in (0.5, -3.0, 100.0):
        np.testing.assert_allclose(
            sisnr(Tensor(est + c), Tensor(ref)).item(), base, atol=1e-9, rtol=0
        )
        np.testing.assert_allclose(
            sisnr(Tensor(est), Tensor(ref + c)).item(), base, atol=1e-9, rtol=0
        )


def test_sisnr_monotone_degradation():
    rng = np.random.default_rng(23)
    ref = rng.normal(size=256)
    noise = _orthogonal_noise(ref, rng)
    values = [
        sisnr(Tensor(ref + scale * noise), Tensor(ref)).item()
        for scale in (0.5, 1.0, 4.0, 10.0)  # keeps every point inside the clamps
    ]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_sisnr_gradient_finite_differences():
    rng = np.random.default_rng(24)
    ref = rng.normal(size=32)
    est = ref + rng.normal(size=32) * 0.4
    assert check_grads(lambda e, r: sisnr(e, r), [est, ref]) < 1e-6


def test_sisnr_domain_errors():
    with pytest.raises(DegenerateReferenceError):
        sisnr(Tensor(np.array([1.0, 2.0, 3.0])), Tensor(np.full(3, 0.7)))
    with pytest.raises(ShapeError):
        sisnr(Tensor(np.zeros(4)), Tensor(np.zeros(5)))
    with pytest.raises(ShapeError):
        sisnr(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 2))))
    with pytest.raises(ContractError):
        sisnr(Tensor(np.array([1.0])), Tensor(np.array([1.0])))


# -- spectrogram loss ------------------------------------------------------------

def test_spectrogram_loss_perfect_and_scaled():
    true = RNG.normal(size=(6, 10))
    assert spectrogram_loss(Tensor(true.copy()), true).item() == -40.0
    assert spectrogram_loss(Tensor(2.0 * true), true).item() == -40.0


def test_spectrogram_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        spectrogram_loss(Tensor(np.zeros((5, 10))), np.zeros((6, 10)))


def test_spectrogram_loss_gradient_finite_differences():
    rng = np.random.default_rng(31)
    true = rng.normal(size=(5, 8))
    est = true + rng.normal(size=(5, 8)) * 0.5  # comfortably inside the clamps
    assert check_grads(lambda e: spectrogram_loss(e, true), [est]) < 1e-5


def test_spectrogram_loss_improves_toward_truth():
    rng = np.random.default_rng(32)
    true = rng.normal(size=(4, 6))
    far = true + rng.normal(size=(4, 6))
    near = true + 0.1 * (far - true)
    assert spectrogram_loss(Tensor(near), true).item() < spectrogram_loss(Tensor(far), true).item()


# -- combined loss ------------------------------------------------------------------

def test_combined_loss_arithmetic():
    out = combined_loss(Tensor(np.array(2.0)), Tensor(np.array(-30.0)), LossWeights(1.0, 0.1))
    np.testing.assert_allclose(out.item(), -1.0, atol=1e-12)


def test_combined_loss_ctc_only():
    w = LossWeights(w_ctc=1.0, w_spec=0.0)
    ctc = Tensor(np.array(3.25))
    assert combined_loss(ctc, None, w).item() == 3.25
    assert combined_loss(ctc, Tensor(np.array(123.0)), w).item() == 3.25


def test_combined_loss_requires_spec_when_weighted():
    with pytest.raises(ContractError):
        combined_loss(Tensor(np.array(1.0)), None, LossWeights(1.0, 0.1))


def test_loss_weights_validation():
    with pytest.raises(ConfigError):
        LossWeights(w_ctc=-0.1, w_spec=0.5)
    with pytest.raises(ConfigError):
        LossWeights(w_ctc=0.0, w_spec=0.0)


def test_combined_loss_backpropagates_both_terms():
    z = Tensor(random_log_probs(6, 5, np.random.default_rng(41)), requires_grad=True)
    est = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
    true = est.data + RNG.normal(size=(3, 4)) * 0.3
    total = combined_loss(ctc_loss(z, [1, 2]), spectrogram_loss(est, true), LossWeights())
    total.backward()
    assert z.grad is not None and est.grad is not None
    assert np.all(np.isfinite(z.grad)) and np.all(np.isfinite(est.grad))
