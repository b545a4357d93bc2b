"""Deterministic synthetic mixture corpus: utterances, mixtures, manifest.

Every example draws from its own RNG stream keyed by (seed, example index),
so serial and parallel builds produce byte-identical WAVs and manifests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio import Waveform, write_wav
from .errors import ConfigError, CorpusDesignError
from .mixing import (
    SPEED_FACTORS,
    VOLUME_RANGE,
    build_libri_style,
    build_wsj0_style,
    place_in_timeline,
    speed_perturb,
    volume_perturb,
)
from .synth import make_speakers, render_utterance
from .text import VOCAB_SIZE, Transcript

_PROTOCOLS = ("wsj0", "libri")


@dataclass(frozen=True)
class CorpusConfig:
    """Knobs for one corpus build; defaults give the desk-scale 2-mix set."""

    n_speakers: int = 8
    utterances_per_speaker: int = 10
    n_examples: int = 64
    protocol: str = "wsj0"
    n_mix: int = 2
    snr_min: float = 0.0
    snr_max: float = 5.0
    # single-token words by default: decoded hypotheses segment one word per
    # token, so scoring stays exact; longer words remain supported
    min_words: int = 2
    max_words: int = 4
    max_word_len: int = 1
    augment: bool = True
    speed_prob: float = 0.3
    # None -> speakers derive from the build seed; set explicitly to share
    # voices between train and held-out builds.
    speaker_seed: int | None = None
    # also emit each interferer as a target (role-swapped rows sharing the
    # mixture WAV): the mixture alone is then ambiguous and a model has to
    # consult the enrollment to pick the right transcript
    emit_all_targets: bool = False

    def __post_init__(self):
        if self.protocol not in _PROTOCOLS:
            raise ConfigError(f"unknown mixing protocol {self.protocol!r}")
        if self.n_mix not in (2, 3):
            raise ConfigError(f"n_mix must be 2 or 3, got {self.n_mix}")
        if self.n_speakers < self.n_mix:
            raise ConfigError("need at least n_mix speakers")
        if self.snr_max < self.snr_min:
            raise ConfigError("snr_max < snr_min")
        if not 1 <= self.min_words <= self.max_words:
            raise ConfigError("bad word-count range")
        if self.max_word_len < 1 or self.utterances_per_speaker < 1:
            raise ConfigError("bad corpus sizes")
        if not 0.0 <= self.speed_prob <= 1.0:
            raise ConfigError("speed_prob outside [0, 1]")


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    speaker_index: int
    transcript: Transcript
    waveform: Waveform
    rel_path: str


def _substream(*entropy: int) -> int:
    """Well-mixed integer seed derived from a tuple of integers."""
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, np.uint64)[0])


def _sample_transcript(rng: np.random.Generator, cfg: CorpusConfig, used: set) -> Transcript:
    for _ in range(10_000):
        n_words = int(rng.integers(cfg.min_words, cfg.max_words + 1))
        words = tuple(
            tuple(
                int(t)
                for t in rng.integers(
                    1, VOCAB_SIZE + 1, size=int(rng.integers(1, cfg.max_word_len + 1))
                )
            )
            for _ in range(n_words)
        )
        if words not in used:
            used.add(words)
            return Transcript(words)
    raise CorpusDesignError(
        "could not draw a fresh transcript; corpus too large for the vocabulary"
    )


def _make_utterances(cfg: CorpusConfig, seed: int, speakers, out_dir: Path) -> list:
    """Render every clean utterance once; transcripts are corpus-unique so a
    hypothesis can only match one component's reference."""
    used: set = set()
    table = []
    for spk_idx, speaker in enumerate(speakers):
        rows = []
        for j in range(cfg.utterances_per_speaker):
            trng = np.random.default_rng([seed, 547, spk_idx, j])
            transcript = _sample_transcript(trng, cfg, used)
            w = render_utterance(speaker, transcript, _substream(seed, 631, spk_idx, j))
            utt_id = f"{speaker.speaker_id}-u{j:02d}"
            rel = f"wavs/utt/{utt_id}.wav"
            write_wav(out_dir / rel, w)
            rows.append(Utterance(utt_id, spk_idx, transcript, w, rel))
        table.append(rows)
    return table


def _maybe_speed(w: Waveform, rng: np.random.Generator, cfg: CorpusConfig):
    if cfg.augment and rng.random() < cfg.speed_prob:
        factor = float(SPEED_FACTORS[int(rng.integers(0, len(SPEED_FACTORS)))])
    else:
        factor = 1.0
    return speed_perturb(w, factor), factor


def _assemble_example(
    cfg: CorpusConfig,
    speakers,
    picks: dict,
    target_idx: int,
    intf_idxs: list,
    rng: np.random.Generator,
    mix_seed: int,
    example_id: str,
    out_dir: Path,
) -> list:
    """Mix one example from already-picked utterances and write its WAVs.

    Returns the manifest rows: the target row, plus one role-swapped row per
    interferer (sharing the mixture WAV) when cfg.emit_all_targets is set.
    """
    target_utt = picks[target_idx][0]
    target_w, target_speed = _maybe_speed(target_utt.waveform, rng, cfg)
    intf_ws, intf_speeds = [], []
    for spk in intf_idxs:
        w, f = _maybe_speed(picks[spk][0].waveform, rng, cfg)
        intf_ws.append(w)
        intf_speeds.append(f)

    if cfg.protocol == "wsj0":
        snrs = [float(s) for s in rng.uniform(cfg.snr_min, cfg.snr_max, size=len(intf_ws))]
        built = build_wsj0_style(target_w, intf_ws, snrs, mix_seed)
        mixture, clean_aligned = built.mixture, built.components[0]
        delays = list(built.front_pads_sec)
        intf_snrs = list(built.snrs_db)
        snr_field = intf_snrs[0] if len(intf_snrs) == 1 else intf_snrs
        # each interferer's actual contribution to the mix (gain applied)
        contribs = [
            Waveform(c.samples * g) for c, g in zip(built.components[1:], built.gains)
        ]
    else:
        mixture, delays = build_libri_style([target_w, *intf_ws], mix_seed)
        clean_aligned = place_in_timeline(target_w, delays[0], len(mixture))
        intf_snrs = [None] * len(intf_ws)
        snr_field = None
        contribs = [
            place_in_timeline(w, delays[pos + 1], len(mixture))
            for pos, w in enumerate(intf_ws)
        ]

    volume = float(rng.uniform(*VOLUME_RANGE)) if cfg.augment else 1.0
    mixture = volume_perturb(mixture, volume)

    mix_rel = f"wavs/mix/{example_id}.wav"
    ref_rel = f"wavs/ref/{example_id}.wav"
    write_wav(out_dir / mix_rel, mixture)
    write_wav(out_dir / ref_rel, clean_aligned)

    aux_paths = [u.rel_path for u in picks[target_idx][1:]]
    interferers = []
    for pos, spk in enumerate(intf_idxs):
        u = picks[spk][0]
        interferers.append(
            {
                "speaker": speakers[spk].speaker_id,
                "transcript": u.transcript.text,
                "utt_id": u.utt_id,
                "auxiliary_paths": [x.rel_path for x in picks[spk][1:]],
                "snr_db": intf_snrs[pos],
                "speed_factor": intf_speeds[pos],
            }
        )

    rows = [
        {
            "example_id": example_id,
            "protocol": cfg.protocol,
            "mixture_path": mix_rel,
            "auxiliary_path": aux_paths[0],
            "auxiliary_paths": aux_paths,
            "target_clean_path": ref_rel,
            "transcript": target_utt.transcript.text,
            "target_speaker": speakers[target_idx].speaker_id,
            "snr_db": snr_field,
            "delays_sec": delays,
            "speed_factor": target_speed,
            "volume_factor": volume,
            "utt_ids": {
                "mixture": target_utt.utt_id,
                "auxiliary": picks[target_idx][1].utt_id,
            },
            "interferers": interferers,
        }
    ]
    if not cfg.emit_all_targets:
        return rows

    for pos, spk in enumerate(intf_idxs):
        u = picks[spk][0]
        mirror_id = f"{example_id}t{pos + 1}"
        mirror_ref = f"wavs/ref/{mirror_id}.wav"
        write_wav(out_dir / mirror_ref, contribs[pos])
        if cfg.protocol == "wsj0":
            # SNRs re-expressed relative to the new target
            own = intf_snrs[pos]
            others_snr = [-own] + [
                intf_snrs[q] - own for q in range(len(intf_idxs)) if q != pos
            ]
        else:
            others_snr = [None] * len(intf_idxs)
        others = [
            {
                "speaker": speakers[target_idx].speaker_id,
                "transcript": target_utt.transcript.text,
                "utt_id": target_utt.utt_id,
                "auxiliary_paths": aux_paths,
                "snr_db": others_snr[0],
                "speed_factor": target_speed,
            }
        ]
        k = 1
        for q, spk_q in enumerate(intf_idxs):
            if q == pos:
                continue
            uq = picks[spk_q][0]
            others.append(
                {
                    "speaker": speakers[spk_q].speaker_id,
                    "transcript": uq.transcript.text,
                    "utt_id": uq.utt_id,
                    "auxiliary_paths": [x.rel_path for x in picks[spk_q][1:]],
                    "snr_db": others_snr[k],
                    "speed_factor": intf_speeds[q],
                }
            )
            k += 1
        m_aux = [x.rel_path for x in picks[spk][1:]]
        snr_vals = [e["snr_db"] for e in others]
        rows.append(
            {
                "example_id": mirror_id,
                "protocol": cfg.protocol,
                "mixture_path": mix_rel,
                "auxiliary_path": m_aux[0],
                "auxiliary_paths": m_aux,
                "target_clean_path": mirror_ref,
                "transcript": u.transcript.text,
                "target_speaker": speakers[spk].speaker_id,
                "snr_db": None
                if cfg.protocol == "libri"
                else (snr_vals[0] if len(snr_vals) == 1 else snr_vals),
                "delays_sec": [delays[pos + 1], delays[0]]
                + [delays[q + 1] for q in range(len(intf_idxs)) if q != pos],
                "speed_factor": intf_speeds[pos],
                "volume_factor": volume,
                "utt_ids": {
                    "mixture": u.utt_id,
                    "auxiliary": picks[spk][1].utt_id,
                },
                "interferers": others,
            }
        )
    return rows


def build_corpus(cfg: CorpusConfig, seed: int, out_dir) -> list:
    """Build WAVs plus a JSONL manifest under out_dir; returns the manifest rows.

    Each row carries the mixture, the aligned clean-target reference used by
    the reconstruction loss, and per-speaker auxiliary paths (two per speaker
    when the corpus has enough utterances) so evaluation can re-target any
    component speaker.
    """
    out_dir = Path(out_dir)
    (out_dir / "wavs" / "utt").mkdir(parents=True, exist_ok=True)
    (out_dir / "wavs" / "mix").mkdir(parents=True, exist_ok=True)
    (out_dir / "wavs" / "ref").mkdir(parents=True, exist_ok=True)

    speaker_seed = cfg.speaker_seed if cfg.speaker_seed is not None else seed
    speakers = make_speakers(cfg.n_speakers, speaker_seed)
    utts = _make_utterances(cfg, seed, speakers, out_dir)

    rows = []
    for i in range(cfg.n_examples):
        rng = np.random.default_rng([seed, 1009, i])
        chosen = rng.choice(cfg.n_speakers, size=cfg.n_mix, replace=False)
        target_idx, intf_idxs = int(chosen[0]), [int(s) for s in chosen[1:]]

        if cfg.utterances_per_speaker < 2:
            raise CorpusDesignError(
                f"speaker {speakers[target_idx].speaker_id} has fewer than 2 "
                "utterances; cannot keep auxiliary and mixture utterances distinct"
            )

        # mixture utterance + up to two distinct auxiliaries, per speaker
        n_pick = min(3, cfg.utterances_per_speaker)
        picks = {}
        for spk in (target_idx, *intf_idxs):
            sel = rng.choice(cfg.utterances_per_speaker, size=n_pick, replace=False)
            picks[spk] = [utts[spk][int(k)] for k in sel]

        rows.extend(
            _assemble_example(
                cfg,
                speakers,
                picks,
                target_idx,
                intf_idxs,
                rng,
                _substream(seed, 2113, i),
                f"ex{i:05d}",
                out_dir,
            )
        )

    write_manifest(rows, out_dir / "manifest.jsonl")
    return rows


def build_fixed_pairs(cfg: CorpusConfig, seed: int, out_dir, pairs, variants_per_pair: int = 8) -> list:
    """Render explicit (target, interferer) utterance pairings, several fresh
    mixing draws each, into a self-contained corpus directory.

    The utterance bank is rebuilt exactly as build_corpus(cfg, seed) renders
    it, so a pairing absent from that corpus stays held out even though every
    voice and utterance is familiar — the probe for enrollment-driven
    selection on novel overlaps.  `pairs` holds (target_utt_id,
    interferer_utt_id) tuples; auxiliaries are redrawn per variant from the
    speakers' remaining utterances.
    """
    out_dir = Path(out_dir)
    (out_dir / "wavs" / "utt").mkdir(parents=True, exist_ok=True)
    (out_dir / "wavs" / "mix").mkdir(parents=True, exist_ok=True)
    (out_dir / "wavs" / "ref").mkdir(parents=True, exist_ok=True)

    speaker_seed = cfg.speaker_seed if cfg.speaker_seed is not None else seed
    speakers = make_speakers(cfg.n_speakers, speaker_seed)
    utts = _make_utterances(cfg, seed, speakers, out_dir)
    by_id = {u.utt_id: u for per_spk in utts for u in per_spk}

    rows = []
    for p_idx, (target_id, intf_id) in enumerate(pairs):
        try:
            tgt, intf = by_id[target_id], by_id[intf_id]
        except KeyError as missing:
            raise CorpusDesignError(f"unknown utterance id {missing}") from None
        if tgt.speaker_index == intf.speaker_index:
            raise CorpusDesignError(f"pairing ({target_id}, {intf_id}) mixes a speaker with themselves")
        for v in range(variants_per_pair):
            rng = np.random.default_rng([seed, 3307, p_idx, v])
            picks = {}
            for u in (tgt, intf):
                pool = [
                    x for x in utts[u.speaker_index] if x.utt_id != u.utt_id
                ]
                if not pool:
                    raise CorpusDesignError(
                        f"speaker {speakers[u.speaker_index].speaker_id} has no "
                        "spare utterance to enroll with"
                    )
                sel = rng.choice(len(pool), size=min(2, len(pool)), replace=False)
                picks[u.speaker_index] = [u] + [pool[int(k)] for k in sel]
            rows.extend(
                _assemble_example(
                    cfg,
                    speakers,
                    picks,
                    tgt.speaker_index,
                    [intf.speaker_index],
                    rng,
                    _substream(seed, 3391, p_idx, v),
                    f"pr{p_idx:02d}v{v:02d}",
                    out_dir,
                )
            )

    write_manifest(rows, out_dir / "manifest.jsonl")
    return rows


def write_manifest(rows: list, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


@dataclass(frozen=True)
class InterfererRef:
    speaker: str
    transcript: Transcript
    utt_id: str
    auxiliary_paths: tuple
    snr_db: float | None
    speed_factor: float


@dataclass(frozen=True)
class ManifestRow:
    """One mixture example with all paths resolved against the manifest dir."""

    example_id: str
    protocol: str
    mixture_path: Path
    auxiliary_paths: tuple
    target_clean_path: Path | None
    transcript: Transcript
    target_speaker: str
    snr_db: object
    delays_sec: tuple
    speed_factor: float
    volume_factor: float
    utt_ids: dict
    interferers: tuple

    @classmethod
    def from_json(cls, obj: dict, base: Path) -> "ManifestRow":
        aux = obj.get("auxiliary_paths") or [obj["auxiliary_path"]]
        clean = obj.get("target_clean_path")
        interferers = tuple(
            InterfererRef(
                speaker=e["speaker"],
                transcript=Transcript.from_text(e["transcript"]),
                utt_id=e.get("utt_id", ""),
                auxiliary_paths=tuple(base / p for p in e.get("auxiliary_paths", [])),
                snr_db=e.get("snr_db"),
                speed_factor=float(e.get("speed_factor", 1.0)),
            )
            for e in obj.get("interferers", [])
        )
        return cls(
            example_id=obj.get("example_id", ""),
            protocol=obj.get("protocol", "wsj0"),
            mixture_path=base / obj["mixture_path"],
            auxiliary_paths=tuple(base / p for p in aux),
            target_clean_path=(base / clean) if clean else None,
            transcript=Transcript.from_text(obj["transcript"]),
            target_speaker=obj["target_speaker"],
            snr_db=obj.get("snr_db"),
            delays_sec=tuple(obj.get("delays_sec", ())),
            speed_factor=float(obj.get("speed_factor", 1.0)),
            volume_factor=float(obj.get("volume_factor", 1.0)),
            utt_ids=obj.get("utt_ids", {}),
            interferers=interferers,
        )


def load_manifest(path) -> list:
    path = Path(path)
    rows = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(ManifestRow.from_json(json.loads(line), path.parent))
    return rows


def sweep_config(cfg: CorpusConfig, snr_db: float) -> CorpusConfig:
    """Pin the SNR range to one value; with the same seed, every other draw is
    unchanged, so sweep mixtures differ only in interferer gain."""
    return replace(cfg, snr_min=float(snr_db), snr_max=float(snr_db))
