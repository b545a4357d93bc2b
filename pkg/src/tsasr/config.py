"""INI config files for the CLI; command-line flags override file values.

Sections: [corpus], [model], [train]. Every key is validated against the
target dataclass so typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .corpus import CorpusConfig
from .errors import ConfigError
from .features import SpecAugmentPolicy
from .losses import LossWeights
from .net import ConformerConfig, ModelConfig
from .trainer import TrainConfig

_CORPUS_KEYS = {
    "n_speakers": int,
    "utterances_per_speaker": int,
    "n_examples": int,
    "protocol": str,
    "n_mix": int,
    "snr_min": float,
    "snr_max": float,
    "min_words": int,
    "max_words": int,
    "max_word_len": int,
    "augment": bool,
    "speed_prob": float,
    "speaker_seed": int,
    "emit_all_targets": bool,
}

_MODEL_KEYS = {
    "preset": str,  # desk | paper
    "n_layers": int,
    "d_model": int,
    "d_ff": int,
    "n_heads": int,
    "conv_kernel": int,
    "dropout": float,
    "emb_dim": int,
    "spk_hidden": int,
    "conv_norm": str,
    "max_rel_dist": int,
}

_TRAIN_KEYS = {
    "peak_lr": float,
    "weight_decay": float,
    "warmup_steps": int,
    "total_steps": int,
    "min_lr": float,
    "batch_size": int,
    "seed": int,
    "freeze_speaker_encoder": bool,
    "grad_clip": float,
    "beta1": float,
    "beta2": float,
    "adam_eps": float,
    "validate_every": int,
    "use_spec_augment": bool,
    "stop_at_zero_wer": bool,
    "w_ctc": float,
    "w_spec": float,
    "n_freq_masks": int,
    "max_freq_width": int,
    "n_time_masks": int,
    "max_time_width": int,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, value, typ):
    if value is None or isinstance(value, typ):
        return value
    s = str(value).strip()
    if typ is bool:
        low = s.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        return typ(s)
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {value!r}") from None


def load_config_file(path) -> dict:
    """Read an INI file into {section: {key: str}}."""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return {section: dict(parser.items(section)) for section in parser.sections()}


def _collect(section: dict, allowed: dict, overrides: dict, where: str) -> dict:
    merged = dict(section)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    out = {}
    for key, value in merged.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{where}]")
        out[key] = _coerce(key, value, allowed[key])
    return out


def corpus_config(file_cfg: dict, **overrides) -> CorpusConfig:
    kw = _collect(file_cfg.get("corpus", {}), _CORPUS_KEYS, overrides, "corpus")
    return CorpusConfig(**kw)


def model_config(file_cfg: dict, **overrides) -> ModelConfig:
    kw = _collect(file_cfg.get("model", {}), _MODEL_KEYS, overrides, "model")
    preset = kw.pop("preset", "desk")
    if preset == "desk":
        base_block, base = ConformerConfig.desk(), ModelConfig.desk()
    elif preset == "paper":
        base_block, base = ConformerConfig.paper(), ModelConfig.paper()
    else:
        raise ConfigError(f"unknown model preset {preset!r}")
    block_kw = {k: kw.pop(k) for k in list(kw) if k in
                ("n_layers", "d_model", "d_ff", "n_heads", "conv_kernel", "dropout")}
    block = ConformerConfig(
        n_layers=block_kw.get("n_layers", base_block.n_layers),
        d_model=block_kw.get("d_model", base_block.d_model),
        d_ff=block_kw.get("d_ff", base_block.d_ff),
        n_heads=block_kw.get("n_heads", base_block.n_heads),
        conv_kernel=block_kw.get("conv_kernel", base_block.conv_kernel),
        dropout=block_kw.get("dropout", base_block.dropout),
    )
    return ModelConfig(
        masknet=block,
        asr=block,
        emb_dim=kw.get("emb_dim", base.emb_dim),
        spk_hidden=kw.get("spk_hidden", base.spk_hidden),
        conv_norm=kw.get("conv_norm", base.conv_norm),
        max_rel_dist=kw.get("max_rel_dist", base.max_rel_dist),
    )


def train_config(file_cfg: dict, **overrides) -> TrainConfig:
    kw = _collect(file_cfg.get("train", {}), _TRAIN_KEYS, overrides, "train")
    weights = LossWeights(w_ctc=kw.pop("w_ctc", 1.0), w_spec=kw.pop("w_spec", 0.1))
    policy_kw = {k: kw.pop(k) for k in list(kw) if k in
                 ("n_freq_masks", "max_freq_width", "n_time_masks", "max_time_width")}
    policy = SpecAugmentPolicy(**policy_kw) if policy_kw else SpecAugmentPolicy()
    return TrainConfig(loss_weights=weights, spec_augment_policy=policy, **kw)
