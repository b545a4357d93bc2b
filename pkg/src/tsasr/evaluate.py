"""Target-speaker evaluation: per-mixture transcription, pooled TS-WER,
auxiliary-utterance policies, SNR sweeps, and alignment export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE, Waveform, read_wav
from .checkpoint import load_checkpoint
from .corpus import CorpusConfig, ManifestRow, build_corpus, load_manifest, sweep_config
from .decode import Hypothesis, WerReport, greedy_decode, wer
from .errors import ConfigError, ContractError
from .features import HOP_SAMPLES, extract_features
from .net import ModelConfig, TsAsrModel

# one subsampled frame covers four 10 ms hops
SUBSAMPLED_FRAME_SECONDS = 4 * HOP_SAMPLES / SAMPLE_RATE


@dataclass(frozen=True)
class AuxPolicy:
    """How many auxiliary utterances to enroll with and an optional cap on
    their total duration in seconds."""

    count: int = 1
    max_seconds: float | None = None

    def __post_init__(self):
        if self.count not in (1, 2):
            raise ConfigError("aux count must be 1 or 2")
        if self.max_seconds is not None and self.max_seconds <= 0:
            raise ConfigError("aux max_seconds must be positive")


def select_aux_waveforms(paths, policy: AuxPolicy, row_id: str = "") -> list:
    """Load the first `count` auxiliaries and apply the duration budget."""
    paths = list(paths)
    if len(paths) < policy.count:
        raise ContractError(
            f"{row_id or 'row'}: {policy.count} auxiliaries requested, "
            f"manifest provides {len(paths)}"
        )
    waves = [_read(p, row_id) for p in paths[: policy.count]]
    if policy.max_seconds is None:
        return waves
    budget = int(round(policy.max_seconds * SAMPLE_RATE))
    out = []
    for w in waves:
        if budget <= 0:
            break
        take = min(len(w), budget)
        # a truncated tail shorter than one analysis window is useless
        if take < 400:
            break
        out.append(Waveform(w.samples[:take]) if take < len(w) else w)
        budget -= take
    if not out:
        raise ContractError(f"{row_id or 'row'}: aux duration budget leaves no usable audio")
    return out


def _read(path, row_id: str) -> Waveform:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{row_id or 'row'}: missing audio file {path}")
    return read_wav(path)


class Transcriber:
    """Feature extraction + model forward + greedy decode for one mixture."""

    def __init__(self, model: TsAsrModel):
        self.model = model

    @classmethod
    def from_checkpoint(cls, path) -> "Transcriber":
        snap = load_checkpoint(path)
        model = TsAsrModel(ModelConfig.from_dict(snap["config"]), seed=0)
        model.load_state(snap["params"])
        return cls(model)

    def transcribe(self, mixture: Waveform, aux_waves, probe: dict | None = None) -> Hypothesis:
        mix_spec = extract_features(mixture)
        aux_specs = [extract_features(a).values for a in aux_waves]
        if probe is not None:
            probe["aux_frames"] = int(sum(a.shape[0] for a in aux_specs))
        out = self.model.forward(mix_spec.values, aux_specs, with_reconstruction=False)
        if probe is not None:
            probe["embedding"] = out.embedding.data.copy()
        return greedy_decode(out.log_probs)

    def embed(self, aux_waves) -> np.ndarray:
        """Speaker embedding from enrollment audio alone."""
        aux_specs = [extract_features(a).values for a in aux_waves]
        return self.model.speaker_encoder(aux_specs).data.copy()


@dataclass
class ExampleResult:
    example_id: str
    speaker: str
    ref_text: str
    hyp_text: str
    report: WerReport

    def to_dict(self) -> dict:
        d = self.report.to_dict()
        d.update(example_id=self.example_id, speaker=self.speaker,
                 ref=self.ref_text, hyp=self.hyp_text)
        return d


@dataclass
class EvalReport:
    """Pooled corpus TS-WER (total errors over total reference words)."""

    corpus: WerReport
    per_example: list

    @property
    def ts_wer_percent(self) -> float:
        return self.corpus.wer_percent

    def to_dict(self) -> dict:
        d = self.corpus.to_dict()
        d["per_example"] = [e.to_dict() for e in self.per_example]
        return d


def ts_eval(rows, transcriber: Transcriber, aux_policy: AuxPolicy | None = None,
            multi_target: bool = False, only_speaker: str | None = None) -> EvalReport:
    """One inference per (mixture, target) pair; `multi_target` also scores
    every interferer as the target using its own auxiliaries. `only_speaker`
    restricts scoring to mixtures containing that speaker, targeted at them."""
    aux_policy = aux_policy or AuxPolicy()
    results = []
    for row in rows:
        targets = [(row.target_speaker, row.transcript, row.auxiliary_paths)]
        if multi_target or only_speaker is not None:
            targets += [(i.speaker, i.transcript, i.auxiliary_paths) for i in row.interferers]
        if only_speaker is not None:
            targets = [t for t in targets if t[0] == only_speaker]
            if not targets:
                continue
        mixture = _read(row.mixture_path, row.example_id)
        for speaker, transcript, aux_paths in targets:
            waves = select_aux_waveforms(aux_paths, aux_policy, row.example_id)
            hyp = transcriber.transcribe(mixture, waves)
            results.append(
                ExampleResult(
                    example_id=row.example_id,
                    speaker=speaker,
                    ref_text=transcript.text,
                    hyp_text=hyp.text,
                    report=wer(transcript, hyp),
                )
            )
    subs = sum(r.report.substitutions for r in results)
    ins = sum(r.report.insertions for r in results)
    dels = sum(r.report.deletions for r in results)
    words = sum(r.report.n_ref_words for r in results)
    corpus = WerReport(substitutions=subs, insertions=ins, deletions=dels, n_ref_words=words)
    return EvalReport(corpus=corpus, per_example=results)


def target_selection_eval(rows, transcriber: Transcriber,
                          aux_policy: AuxPolicy | None = None) -> list:
    """For each 2-mix row, score the hypothesis against both component
    transcripts, enrolling first with the target's auxiliary and then with the
    interferer's. Fuels the speaker-conditioned-selection checks."""
    aux_policy = aux_policy or AuxPolicy()
    records = []
    for row in rows:
        if not row.interferers:
            raise ContractError(f"{row.example_id}: no interferer metadata in manifest")
        intf = row.interferers[0]
        mixture = _read(row.mixture_path, row.example_id)
        rec = {"example_id": row.example_id}
        for tag, aux_paths in (("target_aux", row.auxiliary_paths),
                               ("interferer_aux", intf.auxiliary_paths)):
            waves = select_aux_waveforms(aux_paths, aux_policy, row.example_id)
            hyp = transcriber.transcribe(mixture, waves)
            rec[tag] = {
                "hyp": hyp.text,
                "wer_vs_target": wer(row.transcript, hyp).wer_percent,
                "wer_vs_interferer": wer(intf.transcript, hyp).wer_percent,
            }
        records.append(rec)
    return records


def snr_sweep(base_cfg: CorpusConfig, build_seed: int, transcriber: Transcriber,
              snr_list, workdir, aux_policy: AuxPolicy | None = None) -> list:
    """Rebuild the corpus with the SNR pinned to each listed value (same seed,
    so mixtures differ only in interferer gain) and score each set."""
    workdir = Path(workdir)
    curve = []
    for snr in snr_list:
        snr = float(snr)
        out = workdir / f"snr_{snr:+.1f}".replace(".", "p")
        rows = build_corpus(sweep_config(base_cfg, snr), build_seed, out)
        loaded = load_manifest(out / "manifest.jsonl")
        report = ts_eval(loaded, transcriber, aux_policy)
        curve.append({"snr_db": snr, "ts_wer": report.ts_wer_percent})
    return curve


def write_sweep_csv(curve: list, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "ts_wer"])
        for point in curve:
            writer.writerow([point["snr_db"], point["ts_wer"]])


def write_alignment_csv(hyp: Hypothesis, path,
                        frame_seconds: float = SUBSAMPLED_FRAME_SECONDS) -> None:
    """Per-frame non-blank emission probabilities as (frame, time_sec, token,
    probability) rows — the time-aligned posterior curves as plottable data."""
    from .text import token_to_char

    post = hyp.frame_posteriors
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "time_sec", "token", "probability"])
        for t in range(post.shape[0]):
            for k in range(1, post.shape[1]):
                writer.writerow(
                    [t, round(t * frame_seconds, 6), token_to_char(k), f"{post[t, k]:.8g}"]
                )


def spearman_corr(x, y) -> float:
    """Spearman rank correlation with average ranks for ties; 0.0 when either
    input is constant (no monotone trend measurable)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ContractError("spearman needs two equal-length vectors, n >= 2")

    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
        for val in np.unique(v):
            m = v == val
            r[m] = r[m].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0 or sy == 0:
        return 0.0
    return float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))
