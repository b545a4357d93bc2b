"""Model components: convolutional subsampler, Conformer blocks, the
speaker-conditioned MaskNet, the CTC encoder, and the reconstruction head.

All parameters are float64 tensors registered under dotted names through a
small Module base class, so the trainer and checkpoint code can address them
uniformly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, ShapeError, TooShortError
from .text import VOCAB_SIZE

MIN_SUBSAMPLE_FRAMES = 8


@dataclass(frozen=True)
class ConformerConfig:
    n_layers: int
    d_model: int
    d_ff: int
    n_heads: int
    conv_kernel: int
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.conv_kernel % 2 == 0:
            raise ConfigError(f"conv_kernel must be odd, got {self.conv_kernel}")
        if min(self.n_layers, self.d_model, self.d_ff, self.n_heads) < 1:
            raise ConfigError("all ConformerConfig sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout outside [0, 1)")

    @classmethod
    def paper(cls) -> "ConformerConfig":
        return cls(n_layers=18, d_model=256, d_ff=1024, n_heads=4, conv_kernel=31, dropout=0.1)

    @classmethod
    def desk(cls) -> "ConformerConfig":
        return cls(n_layers=2, d_model=64, d_ff=128, n_heads=4, conv_kernel=7, dropout=0.0)


@dataclass(frozen=True)
class ModelConfig:
    masknet: ConformerConfig
    asr: ConformerConfig
    emb_dim: int = 32
    n_mels: int = 80
    vocab_size: int = VOCAB_SIZE
    spk_hidden: int = 64
    conv_norm: str = "layer"  # "layer" (desk default) or folded "batch"
    max_rel_dist: int = 64

    def __post_init__(self):
        if self.masknet.d_model != self.asr.d_model:
            raise ConfigError("MaskNet and ASR stacks must share d_model")
        if self.conv_norm not in ("layer", "batch"):
            raise ConfigError(f"unknown conv_norm {self.conv_norm!r}")
        if min(self.emb_dim, self.n_mels, self.vocab_size, self.spk_hidden) < 1:
            raise ConfigError("all ModelConfig sizes must be positive")

    @classmethod
    def desk(cls) -> "ModelConfig":
        return cls(masknet=ConformerConfig.desk(), asr=ConformerConfig.desk())

    @classmethod
    def paper(cls) -> "ModelConfig":
        return cls(masknet=ConformerConfig.paper(), asr=ConformerConfig.paper(), emb_dim=192)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        obj = dict(obj)
        obj["masknet"] = ConformerConfig(**obj["masknet"])
        obj["asr"] = ConformerConfig(**obj["asr"])
        return cls(**obj)


class Module:
    """Parameter container; attribute assignment registers tensors/submodules."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> dict:
        out = {}
        for name, p in self._params.items():
            out[prefix + name] = p
        for name, child in self._children.items():
            out.update(child.named_parameters(prefix + name + "."))
        return out

    def parameters(self) -> list:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state(self) -> dict:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state(self, state: dict) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ContractError(
                f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ShapeError(f"load_state[{name}]", arr.shape, p.data.shape)
            p.data = arr.copy()


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self._items = []
        for i, m in enumerate(modules):
            setattr(self, str(i), m)
            self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _param(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, scale: float | None = None):
        super().__init__()
        std = scale if scale is not None else 1.0 / math.sqrt(d_in)
        self.weight = _param(rng.normal(0.0, std, size=(d_in, d_out)))
        self.bias = _param(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, d: int):
        super().__init__()
        self.gamma = _param(np.ones(d))
        self.beta = _param(np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta)


class BatchNormFolded(Module):
    """Batch norm in its inference form: running statistics are fixed buffers."""

    def __init__(self, d: int):
        super().__init__()
        self.gamma = _param(np.ones(d))
        self.beta = _param(np.zeros(d))
        self.running_mean = np.zeros(d)
        self.running_var = np.ones(d)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.batch_norm_inference(x, self.gamma, self.beta, self.running_mean, self.running_var)


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng):
        super().__init__()
        self.w_in = Linear(d_model, d_ff, rng)
        self.w_out = Linear(d_ff, d_model, rng)

    def __call__(self, x: Tensor, dropout_p: float = 0.0, rng=None) -> Tensor:
        h = ad.swish(self.w_in(x))
        if dropout_p > 0.0:
            h = ad.dropout(h, dropout_p, rng)
        return self.w_out(h)


class MultiHeadSelfAttention(Module):
    """Self-attention with a learned, distance-clipped relative position bias."""

    def __init__(self, d_model: int, n_heads: int, rng, max_rel_dist: int = 64):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.max_rel_dist = max_rel_dist
        self.q = Linear(d_model, d_model, rng)
        self.k = Linear(d_model, d_model, rng)
        self.v = Linear(d_model, d_model, rng)
        self.out = Linear(d_model, d_model, rng)
        self.rel_bias = _param(np.zeros((2 * max_rel_dist + 1, n_heads)))

    def _bias(self, t: int) -> Tensor:
        idx = np.arange(t)[None, :] - np.arange(t)[:, None]
        idx = np.clip(idx, -self.max_rel_dist, self.max_rel_dist) + self.max_rel_dist
        bias = ad.embedding(self.rel_bias, idx)  # (T, T, H)
        return ad.transpose(bias, (2, 0, 1))

    def _split(self, x: Tensor, t: int) -> Tensor:
        return ad.transpose(ad.reshape(x, (t, self.n_heads, self.d_head)), (1, 0, 2))

    def __call__(self, x: Tensor, dropout_p: float = 0.0, rng=None) -> Tensor:
        t = x.shape[0]
        q = self._split(self.q(x), t)
        k = self._split(self.k(x), t)
        v = self._split(self.v(x), t)
        scores = (q @ ad.transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(self.d_head))
        attn = ad.softmax(scores + self._bias(t), axis=-1)
        if dropout_p > 0.0:
            attn = ad.dropout(attn, dropout_p, rng)
        ctx = ad.reshape(ad.transpose(attn @ v, (1, 0, 2)), (t, self.n_heads * self.d_head))
        return self.out(ctx)


class ConvModule(Module):
    def __init__(self, d_model: int, kernel: int, rng, norm: str = "layer"):
        super().__init__()
        self.pointwise_in = Linear(d_model, 2 * d_model, rng)
        self.depthwise_w = _param(rng.normal(0.0, 1.0 / math.sqrt(kernel), size=(kernel, d_model)))
        self.depthwise_b = _param(np.zeros(d_model))
        self.norm = LayerNorm(d_model) if norm == "layer" else BatchNormFolded(d_model)
        self.pointwise_out = Linear(d_model, d_model, rng)

    def __call__(self, x: Tensor, dropout_p: float = 0.0, rng=None) -> Tensor:
        h = ad.glu(self.pointwise_in(x), axis=-1)
        h = ad.conv1d_depthwise(h, self.depthwise_w, self.depthwise_b)
        h = ad.swish(self.norm(h))
        h = self.pointwise_out(h)
        if dropout_p > 0.0:
            h = ad.dropout(h, dropout_p, rng)
        return h


class ConformerBlock(Module):
    """Half-step FF, relative-bias MHSA, convolution module, half-step FF,
    each residual, with a closing layer norm."""

    def __init__(self, cfg: ConformerConfig, rng, norm: str = "layer", max_rel_dist: int = 64):
        super().__init__()
        self.dropout = cfg.dropout
        self.ln_ff1 = LayerNorm(cfg.d_model)
        self.ff1 = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.ln_att = LayerNorm(cfg.d_model)
        self.attention = MultiHeadSelfAttention(cfg.d_model, cfg.n_heads, rng, max_rel_dist)
        self.ln_conv = LayerNorm(cfg.d_model)
        self.conv = ConvModule(cfg.d_model, cfg.conv_kernel, rng, norm=norm)
        self.ln_ff2 = LayerNorm(cfg.d_model)
        self.ff2 = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.ln_out = LayerNorm(cfg.d_model)

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        p = self.dropout if training else 0.0
        x = x + 0.5 * self.ff1(self.ln_ff1(x), p, rng)
        x = x + self.attention(self.ln_att(x), p, rng)
        x = x + self.conv(self.ln_conv(x), p, rng)
        x = x + 0.5 * self.ff2(self.ln_ff2(x), p, rng)
        return self.ln_out(x)


def subsampled_length(t: int) -> int:
    """Output frames of the 4x subsampler: two stride-2 pad-1 k=3 convolutions,
    i.e. floor((t-1)/2)+1 applied twice, which equals ceil(t/4)."""
    t = (t - 1) // 2 + 1
    return (t - 1) // 2 + 1


class Subsampler(Module):
    """Two stride-2 3x3 convolutions over the time x mel grid, then a linear
    projection of the flattened mel axis to d_model."""

    def __init__(self, d_model: int, rng, n_mels: int = 80):
        super().__init__()
        self.n_mels = n_mels
        c = d_model
        self.conv1_w = _param(rng.normal(0.0, 1.0 / 3.0, size=(3, 3, 1, c)))
        self.conv1_b = _param(np.zeros(c))
        self.conv2_w = _param(rng.normal(0.0, 1.0 / math.sqrt(9 * c), size=(3, 3, c, c)))
        self.conv2_b = _param(np.zeros(c))
        f_out = ((n_mels - 1) // 2 + 1 - 1) // 2 + 1
        self.f_out = f_out
        self.proj = Linear(f_out * c, d_model, rng)

    def __call__(self, spec: Tensor) -> Tensor:
        spec = ad.as_tensor(spec)
        t = spec.shape[0]
        if t < MIN_SUBSAMPLE_FRAMES:
            raise TooShortError(
                f"subsampler needs at least {MIN_SUBSAMPLE_FRAMES} frames, got {t}"
            )
        if spec.shape[1] != self.n_mels:
            raise ShapeError("subsample", spec.shape, (t, self.n_mels))
        x = ad.reshape(spec, (t, self.n_mels, 1))
        x = ad.swish(ad.conv2d(x, self.conv1_w, self.conv1_b, stride=2, pad=1))
        x = ad.swish(ad.conv2d(x, self.conv2_w, self.conv2_b, stride=2, pad=1))
        t_out = x.shape[0]
        return self.proj(ad.reshape(x, (t_out, x.shape[1] * x.shape[2])))


class SpeakerEncoder(Module):
    """Small conv stack with attentive statistics pooling (attention-weighted
    mean concatenated with std) and a linear map to the embedding size."""

    def __init__(self, emb_dim: int, rng, n_mels: int = 80, hidden: int = 64):
        super().__init__()
        self.conv1_w = _param(rng.normal(0.0, 1.0 / math.sqrt(5 * n_mels), size=(5, n_mels, hidden)))
        self.conv1_b = _param(np.zeros(hidden))
        self.conv2_w = _param(rng.normal(0.0, 1.0 / math.sqrt(5 * hidden), size=(5, hidden, hidden)))
        self.conv2_b = _param(np.zeros(hidden))
        self.att_hidden = Linear(hidden, hidden, rng)
        self.att_score = Linear(hidden, 1, rng)
        self.out = Linear(2 * hidden, emb_dim, rng)
        self.hidden = hidden
        self.emb_dim = emb_dim

    def __call__(self, aux_specs) -> Tensor:
        """aux_specs: one (T, n_mels) array/Tensor or a list; lists are
        concatenated along time before pooling."""
        if isinstance(aux_specs, (list, tuple)):
            if not aux_specs:
                raise ContractError("speaker encoder needs at least one auxiliary spectrogram")
            parts = [ad.as_tensor(s) for s in aux_specs]
            x = parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)
        else:
            x = ad.as_tensor(aux_specs)
        h = ad.swish(ad.conv1d(x, self.conv1_w, self.conv1_b))
        h = ad.swish(ad.conv1d(h, self.conv2_w, self.conv2_b))
        scores = self.att_score(ad.tanh(self.att_hidden(h)))  # (T, 1)
        weights = ad.softmax(scores, axis=0)
        mu = ad.sum_(h * weights, axis=0)  # (hidden,)
        dev = h - mu
        var = ad.sum_(dev * dev * weights, axis=0)
        sigma = ad.sqrt(var + 1e-8)
        stats = ad.concat([mu, sigma], axis=0)
        emb = self.out(ad.reshape(stats, (1, 2 * self.hidden)))
        return ad.reshape(emb, (self.emb_dim,))


@dataclass
class MaskedFeatures:
    values: Tensor  # mask * subsampled mixture
    mask: Tensor  # sigmoid outputs, strictly inside (0, 1)


class MaskNet(Module):
    """Conformer stack whose every block input receives the projected speaker
    embedding; emits a sigmoid mask multiplied onto the subsampled mixture."""

    def __init__(self, cfg: ConformerConfig, emb_dim: int, rng, norm: str = "layer",
                 max_rel_dist: int = 64):
        super().__init__()
        self.inject = Linear(emb_dim, cfg.d_model, rng)
        self.blocks = ModuleList(
            [ConformerBlock(cfg, rng, norm, max_rel_dist) for _ in range(cfg.n_layers)]
        )
        self.mask_head = Linear(cfg.d_model, cfg.d_model, rng)
        self.emb_dim = emb_dim

    def __call__(self, s_mix_sub: Tensor, emb: Tensor, training: bool = False, rng=None,
                 probe: dict | None = None) -> MaskedFeatures:
        if emb.shape != (self.emb_dim,):
            raise ShapeError("masknet_forward", emb.shape, (self.emb_dim,))
        inj = self.inject(ad.reshape(emb, (1, self.emb_dim)))  # (1, d_model)
        x = s_mix_sub
        if probe is not None:
            probe["block_inputs"] = []
        for block in self.blocks:
            x = x + inj
            if probe is not None:
                probe["block_inputs"].append(x.data.copy())
            x = block(x, training, rng)
        mask = ad.sigmoid(self.mask_head(x))
        return MaskedFeatures(values=mask * s_mix_sub, mask=mask)


class AsrEncoder(Module):
    """Conformer stack plus a small-initialized classifier and log-softmax.

    The classifier's init scale keeps untrained logit rows near-uniform, which
    keeps early CTC training in a well-conditioned regime.
    """

    def __init__(self, cfg: ConformerConfig, vocab_size: int, rng, norm: str = "layer",
                 max_rel_dist: int = 64):
        super().__init__()
        self.blocks = ModuleList(
            [ConformerBlock(cfg, rng, norm, max_rel_dist) for _ in range(cfg.n_layers)]
        )
        self.out = Linear(cfg.d_model, vocab_size + 1, rng, scale=0.02 / math.sqrt(cfg.d_model))

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        for block in self.blocks:
            x = block(x, training, rng)
        return ad.log_softmax(self.out(x), axis=-1)


class ReconstructionHead(Module):
    """Linear map to mel bins followed by 4x nearest-neighbor upsampling in
    time, truncated or zero-padded to the full-rate frame count."""

    def __init__(self, d_model: int, rng, n_mels: int = 80):
        super().__init__()
        self.proj = Linear(d_model, n_mels, rng)
        self.n_mels = n_mels

    def __call__(self, masked: Tensor, t_full: int) -> Tensor:
        y = self.proj(masked)  # (T', n_mels)
        t_sub = y.shape[0]
        up = ad.reshape(ad.concat([y, y, y, y], axis=1), (4 * t_sub, self.n_mels))
        if 4 * t_sub >= t_full:
            return up[:t_full]
        pad = Tensor(np.zeros((t_full - 4 * t_sub, self.n_mels)))
        return ad.concat([up, pad], axis=0)


@dataclass
class ModelOutput:
    log_probs: Tensor  # (T', vocab+1)
    masked: MaskedFeatures
    reconstruction: Tensor | None  # (T_full, n_mels)
    embedding: Tensor  # (emb_dim,)


class TsAsrModel(Module):
    """Full pipeline: speaker encoder, subsampler, MaskNet, ASR encoder, and
    the optional reconstruction head."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng([seed, 31013])
        self.cfg = cfg
        self.speaker_encoder = SpeakerEncoder(cfg.emb_dim, rng, cfg.n_mels, cfg.spk_hidden)
        self.subsampler = Subsampler(cfg.masknet.d_model, rng, cfg.n_mels)
        self.masknet = MaskNet(cfg.masknet, cfg.emb_dim, rng, cfg.conv_norm, cfg.max_rel_dist)
        self.asr = AsrEncoder(cfg.asr, cfg.vocab_size, rng, cfg.conv_norm, cfg.max_rel_dist)
        self.recon = ReconstructionHead(cfg.asr.d_model, rng, cfg.n_mels)

    def forward(
        self,
        mix_spec,
        aux_specs,
        training: bool = False,
        rng=None,
        with_reconstruction: bool = True,
        probe: dict | None = None,
    ) -> ModelOutput:
        mix = ad.as_tensor(mix_spec)
        t_full = mix.shape[0]
        emb = self.speaker_encoder(aux_specs)
        sub = self.subsampler(mix)
        masked = self.masknet(sub, emb, training, rng, probe=probe)
        log_probs = self.asr(masked.values, training, rng)
        recon = self.recon(masked.values, t_full) if with_reconstruction else None
        return ModelOutput(log_probs=log_probs, masked=masked, reconstruction=recon, embedding=emb)

    __call__ = forward


def count_parameters(model: Module) -> dict:
    """Parameter counts per top-level submodule plus 'total'."""
    counts: dict = {}
    for name, p in model.named_parameters().items():
        top = name.split(".", 1)[0]
        counts[top] = counts.get(top, 0) + p.data.size
    counts["total"] = sum(v for k, v in counts.items())
    return counts
