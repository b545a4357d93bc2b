"""Target-speaker speech recognition on synthetic mixtures.

A self-contained numpy pipeline: deterministic corpus synthesis, log-mel
features, a masking Conformer front-end conditioned on a speaker embedding,
a CTC Conformer recognizer, reverse-mode autodiff, AdamW training, greedy
decoding, and TS-WER evaluation.
"""

from __future__ import annotations

from .audio import SAMPLE_RATE, Waveform, read_wav, write_wav
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import CorpusConfig, ManifestRow, build_corpus, load_manifest, sweep_config
from .decode import Hypothesis, WerReport, greedy_decode, wer
from .errors import (
    CheckpointError,
    ClippingError,
    ConfigError,
    ContractError,
    CorpusDesignError,
    DegenerateReferenceError,
    DegenerateSignalError,
    InfeasibleAlignmentError,
    InvalidTranscriptError,
    NanGradientError,
    ProtocolError,
    ShapeError,
    TooShortError,
    TsasrError,
    UndefinedWerError,
)
from .estimator import TargetSpeakerRecognizer
from .evaluate import AuxPolicy, EvalReport, Transcriber, snr_sweep, ts_eval
from .features import Spectrogram, SpecAugmentPolicy, extract_features, spec_augment
from .losses import LossWeights, combined_loss, ctc_loss, sisnr, spectrogram_loss
from .net import ConformerConfig, ModelConfig, TsAsrModel, count_parameters
from .text import Transcript
from .trainer import TrainConfig, lr_at, train

__version__ = "0.1.0"

__all__ = [
    "SAMPLE_RATE",
    "AuxPolicy",
    "CheckpointError",
    "ClippingError",
    "ConfigError",
    "ConformerConfig",
    "ContractError",
    "CorpusConfig",
    "CorpusDesignError",
    "DegenerateReferenceError",
    "DegenerateSignalError",
    "EvalReport",
    "Hypothesis",
    "InfeasibleAlignmentError",
    "InvalidTranscriptError",
    "LossWeights",
    "ManifestRow",
    "ModelConfig",
    "NanGradientError",
    "ProtocolError",
    "ShapeError",
    "SpecAugmentPolicy",
    "Spectrogram",
    "TargetSpeakerRecognizer",
    "TooShortError",
    "TrainConfig",
    "Transcriber",
    "Transcript",
    "TsAsrModel",
    "TsasrError",
    "UndefinedWerError",
    "Waveform",
    "WerReport",
    "build_corpus",
    "combined_loss",
    "count_parameters",
    "ctc_loss",
    "extract_features",
    "greedy_decode",
    "load_checkpoint",
    "load_manifest",
    "lr_at",
    "read_wav",
    "save_checkpoint",
    "sisnr",
    "snr_sweep",
    "spec_augment",
    "spectrogram_loss",
    "sweep_config",
    "train",
    "ts_eval",
    "wer",
    "write_wav",
]
