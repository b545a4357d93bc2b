"""Optimization loop: AdamW with decoupled decay, linear warmup into cosine
annealing, deterministic batching, JSONL metrics, and resumable checkpoints.

Every stochastic choice (batch order, SpecAugment masks, dropout) is a pure
function of (seed, step), so an interrupted run resumed from a checkpoint
reproduces the uninterrupted trajectory bit-for-bit in 64-bit mode.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import read_wav
from .checkpoint import load_checkpoint, save_checkpoint
from .decode import greedy_decode, wer
from .errors import ConfigError, ContractError, InfeasibleAlignmentError, NanGradientError
from .features import SpecAugmentPolicy, extract_features, spec_augment
from .losses import LossWeights, combined_loss, ctc_loss, spectrogram_loss
from .net import ModelConfig, TsAsrModel

FROZEN_PREFIX = "speaker_encoder."


@dataclass(frozen=True)
class TrainConfig:
    peak_lr: float = 3e-4
    weight_decay: float = 0.01
    warmup_steps: int = 200
    total_steps: int = 2000
    min_lr: float = 1e-6
    batch_size: int = 8
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    freeze_speaker_encoder: bool = False
    grad_clip: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    validate_every: int = 250
    use_spec_augment: bool = True
    spec_augment_policy: SpecAugmentPolicy = field(default_factory=SpecAugmentPolicy)
    # stop as soon as a validation pass measures 0% training TS-WER
    stop_at_zero_wer: bool = False

    def __post_init__(self):
        if not 1 <= self.warmup_steps < self.total_steps:
            raise ConfigError("need 1 <= warmup_steps < total_steps")
        if not 0.0 <= self.min_lr < self.peak_lr:
            raise ConfigError("need 0 <= min_lr < peak_lr")
        if self.batch_size < 1 or self.validate_every < 1:
            raise ConfigError("batch_size and validate_every must be >= 1")
        if self.grad_clip <= 0 or self.weight_decay < 0:
            raise ConfigError("bad grad_clip or weight_decay")


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear ramp 0 -> peak over warmup, then cosine down to min_lr."""
    if not 0 <= step <= cfg.total_steps:
        raise ContractError(f"step {step} outside [0, {cfg.total_steps}]")
    if step <= cfg.warmup_steps:
        return cfg.peak_lr * (step / cfg.warmup_steps)
    frac = (step - cfg.warmup_steps) / (cfg.total_steps - cfg.warmup_steps)
    return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * frac))


def init_opt_state(params: dict) -> dict:
    return {
        "m": {k: np.zeros_like(p.data) for k, p in params.items()},
        "v": {k: np.zeros_like(p.data) for k, p in params.items()},
        "step": 0,
    }


def adamw_step(params: dict, state: dict, lr: float, cfg: TrainConfig) -> None:
    """One decoupled-weight-decay Adam update over `params` (name -> Tensor).

    Missing gradients count as zeros; decay skips vectors and scalars
    (biases, norm gains). Mutates parameter data and state in place.
    """
    if lr < 0:
        raise ContractError("negative learning rate")
    t = state["step"] + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name in params:
        p = params[name]
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NanGradientError(f"non-finite gradient for parameter {name!r}")
        m = state["m"][name]
        v = state["v"][name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        if cfg.weight_decay and p.data.ndim > 1:
            p.data *= 1.0 - lr * cfg.weight_decay
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
    state["step"] = t


def global_grad_norm(params: dict) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return math.sqrt(total)


def clip_gradients(params: dict, max_norm: float) -> float:
    """Scale all gradients to a global norm of at most max_norm; returns the
    pre-clip norm."""
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


@dataclass
class TrainExample:
    """Features cached once per manifest row; reused every epoch."""

    example_id: str
    mix_values: np.ndarray  # (T, n_mels) normalized log-mel
    clean_values: np.ndarray | None  # aligned target reference, own statistics
    aux_values: list  # list of (T_a, n_mels)
    labels: tuple
    ref_words: tuple


def prepare_examples(rows, aux_count: int = 1, need_clean: bool = True) -> list:
    out = []
    for row in rows:
        mix = extract_features(read_wav(row.mixture_path))
        clean = None
        if need_clean:
            if row.target_clean_path is None:
                raise ContractError(
                    f"{row.example_id}: manifest lacks target_clean_path needed "
                    "for the reconstruction loss"
                )
            clean = extract_features(read_wav(row.target_clean_path)).values
        aux_paths = row.auxiliary_paths[:aux_count]
        if len(aux_paths) < aux_count:
            raise ContractError(f"{row.example_id}: not enough auxiliaries")
        aux = [extract_features(read_wav(p)).values for p in aux_paths]
        out.append(
            TrainExample(
                example_id=row.example_id,
                mix_values=mix.values,
                clean_values=clean,
                aux_values=aux,
                labels=row.transcript.tokens,
                ref_words=row.transcript.words,
            )
        )
    return out


def batch_indices(step: int, n: int, batch_size: int, seed: int) -> np.ndarray:
    """Deterministic batch for a step: examples are drawn from a per-epoch
    permutation keyed by (seed, epoch), so any step's batch is recomputable."""
    steps_per_epoch = max(1, math.ceil(n / batch_size))
    epoch, slot = divmod(step, steps_per_epoch)
    perm = np.random.default_rng([seed, 104729, epoch]).permutation(n)
    return perm[slot * batch_size : (slot + 1) * batch_size]


def _substream(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, np.uint64)[0])


@dataclass
class TrainResult:
    last_path: Path
    best_path: Path
    metrics_path: Path
    steps_run: int
    final_val_wer: float | None
    history: list
    model: TsAsrModel


def _validate_wer(model: TsAsrModel, examples: list) -> float:
    errors = words = 0
    for ex in examples:
        out = model.forward(ex.mix_values, ex.aux_values, with_reconstruction=False)
        hyp = greedy_decode(out.log_probs)
        rep = wer(ex.ref_words, hyp)
        errors += rep.n_errors
        words += rep.n_ref_words
    return 100.0 * errors / words


def train(
    rows,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    out_dir,
    val_rows=None,
    resume_from=None,
    max_session_steps: int | None = None,
) -> TrainResult:
    """Train on manifest rows; writes metrics.jsonl, best.ckpt and last.ckpt.

    `resume_from` restarts mid-run from a saved checkpoint; because every
    stochastic draw is keyed by (seed, step), the continuation matches the
    uninterrupted run exactly. `max_session_steps` bounds how many optimizer
    steps this call performs (an induced interruption), leaving last.ckpt
    ready for resumption under the unchanged schedule.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.jsonl"
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"

    weights = cfg.loss_weights
    need_clean = weights.w_spec > 0
    examples = prepare_examples(rows, aux_count=1, need_clean=need_clean)
    val_examples = (
        prepare_examples(val_rows, aux_count=1, need_clean=False) if val_rows else examples
    )
    n = len(examples)
    if n == 0:
        raise ContractError("empty training manifest")

    model = TsAsrModel(model_cfg, seed=cfg.seed)
    params = model.named_parameters()
    trainable = {
        k: p
        for k, p in params.items()
        if not (cfg.freeze_speaker_encoder and k.startswith(FROZEN_PREFIX))
    }
    state = init_opt_state(trainable)
    start_step = 0
    best_wer = math.inf
    if resume_from is not None:
        snap = load_checkpoint(resume_from)
        model.load_state(snap["params"])
        if snap["opt_state"] is not None:
            state = snap["opt_state"]
        start_step = snap["step"]
        prior = snap["extra"].get("best_wer")
        best_wer = math.inf if prior is None else prior

    def save(path, step):
        save_checkpoint(
            path,
            config=model_cfg.to_dict(),
            params=model.state(),
            opt_state=state,
            step=step,
            extra={
                "best_wer": None if math.isinf(best_wer) else best_wer,
                "train_seed": cfg.seed,
            },
        )

    history: list = []
    final_val = None
    mode = "a" if resume_from is not None else "w"
    with metrics_path.open(mode) as metrics:

        def emit(record):
            history.append(record)
            metrics.write(json.dumps(record) + "\n")
            metrics.flush()

        step = start_step
        while step < cfg.total_steps and (
            max_session_steps is None or step - start_step < max_session_steps
        ):
            lr = lr_at(step + 1, cfg)
            model.zero_grad()
            batch = batch_indices(step, n, cfg.batch_size, cfg.seed)
            ctc_total = spec_total = 0.0
            n_used = 0
            n_skipped = 0
            for idx in batch:
                ex = examples[int(idx)]
                mix = ex.mix_values
                if cfg.use_spec_augment:
                    mix = spec_augment_values(
                        mix, cfg.spec_augment_policy, _substream(cfg.seed, 777, step, int(idx))
                    )
                droprng = (
                    np.random.default_rng([cfg.seed, 90001, step, int(idx)])
                    if (model_cfg.masknet.dropout > 0 or model_cfg.asr.dropout > 0)
                    else None
                )
                try:
                    out = model.forward(
                        mix,
                        ex.aux_values,
                        training=True,
                        rng=droprng,
                        with_reconstruction=need_clean,
                    )
                    loss_ctc = ctc_loss(out.log_probs, ex.labels)
                except InfeasibleAlignmentError:
                    n_skipped += 1
                    continue
                loss_spec = (
                    spectrogram_loss(out.reconstruction, ex.clean_values) if need_clean else None
                )
                total = combined_loss(loss_ctc, loss_spec, weights)
                ctc_total += loss_ctc.item()
                if loss_spec is not None:
                    spec_total += loss_spec.item()
                n_used += 1
                total.backward()

            if n_used == 0:
                emit({"step": step + 1, "lr": lr, "loss_ctc": None, "loss_spec": None,
                      "grad_norm": 0.0, "n_skipped": n_skipped})
                step += 1
                continue

            # the batch loss is the mean over its examples
            inv = 1.0 / n_used
            for p in trainable.values():
                if p.grad is not None:
                    p.grad = p.grad * inv
            grad_norm = clip_gradients(trainable, cfg.grad_clip)
            adamw_step(trainable, state, lr, cfg)

            step += 1
            emit(
                {
                    "step": step,
                    "lr": lr,
                    "loss_ctc": ctc_total / n_used,
                    "loss_spec": (spec_total / n_used) if need_clean else None,
                    "grad_norm": grad_norm,
                    "n_skipped": n_skipped,
                }
            )

            if step % cfg.validate_every == 0 or step == cfg.total_steps:
                val = _validate_wer(model, val_examples)
                final_val = val
                emit({"step": step, "ts_wer": val})
                if val < best_wer:
                    best_wer = val
                    save(best_path, step)
                if cfg.stop_at_zero_wer and val == 0.0:
                    break

        save(last_path, step)
    if not best_path.exists():
        save(best_path, step)
    return TrainResult(
        last_path=last_path,
        best_path=best_path,
        metrics_path=metrics_path,
        steps_run=step - start_step,
        final_val_wer=final_val,
        history=history,
        model=model,
    )


def spec_augment_values(values: np.ndarray, policy: SpecAugmentPolicy, seed: int) -> np.ndarray:
    """SpecAugment over a raw (T, n_mels) array."""
    from .features import Spectrogram

    return spec_augment(Spectrogram(values), policy, seed).values
