"""Scikit-learn style facade over the train / transcribe pipeline.

`TargetSpeakerRecognizer` wraps corpus manifests, training, and greedy
decoding behind the familiar ``fit`` / ``predict`` / ``transform`` surface so
the model slots into sklearn tooling (``get_params``, ``clone``,
``Pipeline``). The underlying functional API remains the primary interface.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import load_manifest
from .errors import ContractError
from .evaluate import AuxPolicy, Transcriber, ts_eval
from .losses import LossWeights
from .net import ModelConfig
from .trainer import TrainConfig, train
from .validation import as_waveform, as_waveform_list, check_fitted, positive_int


class TargetSpeakerRecognizer(BaseEstimator):
    """Transcribe the target speaker out of a mixture, given enrollment audio.

    ``fit`` trains from a corpus manifest (path or loaded rows); ``predict``
    maps ``(mixture, auxiliary)`` pairs to transcript strings; ``transform``
    returns speaker embeddings for enrollment audio.
    """

    def __init__(
        self,
        preset: str = "desk",
        total_steps: int = 600,
        warmup_steps: int = 60,
        batch_size: int = 8,
        peak_lr: float = 3e-4,
        w_spec: float = 0.1,
        seed: int = 0,
        freeze_speaker_encoder: bool = False,
        use_spec_augment: bool = True,
        work_dir: str | None = None,
    ):
        self.preset = preset
        self.total_steps = total_steps
        self.warmup_steps = warmup_steps
        self.batch_size = batch_size
        self.peak_lr = peak_lr
        self.w_spec = w_spec
        self.seed = seed
        self.freeze_speaker_encoder = freeze_speaker_encoder
        self.use_spec_augment = use_spec_augment
        self.work_dir = work_dir

    # -- fitting ------------------------------------------------------------

    def _configs(self) -> tuple[ModelConfig, TrainConfig]:
        if self.preset == "desk":
            mc = ModelConfig.desk()
        elif self.preset == "paper":
            mc = ModelConfig.paper()
        else:
            raise ContractError(f"unknown preset {self.preset!r}")
        tc = TrainConfig(
            peak_lr=self.peak_lr,
            warmup_steps=positive_int(self.warmup_steps, "warmup_steps"),
            total_steps=positive_int(self.total_steps, "total_steps"),
            batch_size=positive_int(self.batch_size, "batch_size"),
            loss_weights=LossWeights(w_spec=self.w_spec),
            seed=self.seed,
            freeze_speaker_encoder=self.freeze_speaker_encoder,
            use_spec_augment=self.use_spec_augment,
        )
        return mc, tc

    @staticmethod
    def _rows(manifest):
        if isinstance(manifest, (str, Path)):
            return load_manifest(manifest)
        return list(manifest)

    def fit(self, X, y=None):
        """Train on a manifest path or a sequence of manifest rows."""
        rows = self._rows(X)
        mc, tc = self._configs()
        out = Path(self.work_dir) if self.work_dir else Path(tempfile.mkdtemp(prefix="tsasr_fit_"))
        result = train(rows, mc, tc, out, val_rows=rows if y == "validate" else None)
        self.model_ = result.model
        self.train_result_ = result
        return self

    @classmethod
    def from_checkpoint(cls, path) -> "TargetSpeakerRecognizer":
        """Build a ready-to-predict recognizer from a saved checkpoint."""
        est = cls()
        est.model_ = Transcriber.from_checkpoint(path).model
        est.train_result_ = None
        return est

    # -- inference ----------------------------------------------------------

    def _transcriber(self) -> Transcriber:
        check_fitted(self, "model_")
        return Transcriber(self.model_)

    def predict(self, X) -> list[str]:
        """Transcripts for an iterable of ``(mixture, auxiliary)`` pairs.

        ``mixture`` is a Waveform or 1-D array; ``auxiliary`` is one waveform
        or a list of them from the target speaker.
        """
        t = self._transcriber()
        out = []
        for mixture, aux in X:
            hyp = t.transcribe(as_waveform(mixture, "mixture"), as_waveform_list(aux))
            out.append(hyp.text)
        return out

    def transform(self, X) -> np.ndarray:
        """Speaker embeddings, one row per enrollment (waveform or list)."""
        t = self._transcriber()
        rows = [t.embed(as_waveform_list(x)) for x in X]
        return np.stack(rows, axis=0)

    def score(self, X, y=None) -> float:
        """``1 - TS-WER`` over a manifest (sklearn convention: higher is better)."""
        report = ts_eval(self._rows(X), self._transcriber(), AuxPolicy(count=1))
        return 1.0 - report.ts_wer_percent / 100.0
