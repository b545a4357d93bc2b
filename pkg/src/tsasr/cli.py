"""Single-binary CLI over the pipeline: corpus synthesis, training,
evaluation, transcription, alignment export, SNR sweeps, parameter counts.

Config file values (INI) are defaults; command-line flags win. Failures exit
nonzero with a one-line diagnostic, never a stack trace.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audio import read_wav
from .config import corpus_config, load_config_file, model_config, train_config
from .corpus import build_corpus, load_manifest
from .errors import TsasrError
from .evaluate import (
    AuxPolicy,
    Transcriber,
    snr_sweep,
    ts_eval,
    write_alignment_csv,
    write_sweep_csv,
)
from .net import TsAsrModel, count_parameters
from .trainer import train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # single-line diagnostics, no usage dump
        self.exit(2, f"error: {message}\n")


def _model_from_checkpoint(path):
    return Transcriber.from_checkpoint(path).model


def _aux_policy(args) -> AuxPolicy:
    return AuxPolicy(count=args.aux_count, max_seconds=args.aux_seconds)


def cmd_synth(args) -> int:
    cfg = corpus_config(
        load_config_file(args.config),
        n_examples=args.examples,
        protocol=args.protocol,
        n_speakers=args.speakers,
        n_mix=args.n_mix,
    )
    rows = build_corpus(cfg, args.seed, args.out)
    if args.json:
        print(json.dumps({"examples": len(rows), "out": str(args.out),
                          "manifest": str(Path(args.out) / "manifest.jsonl")}))
    else:
        print(f"wrote {len(rows)} examples under {args.out} (manifest.jsonl)")
    return 0


def cmd_train(args) -> int:
    file_cfg = load_config_file(args.config)
    mc = model_config(file_cfg)
    tc = train_config(
        file_cfg,
        seed=args.seed,
        total_steps=args.steps,
        batch_size=args.batch_size,
        w_spec=args.w_spec,
        freeze_speaker_encoder=True if args.freeze_speaker_encoder else None,
        use_spec_augment=False if args.no_spec_augment else None,
    )
    rows = load_manifest(args.manifest)
    val_rows = load_manifest(args.val_manifest) if args.val_manifest else None
    result = train(rows, mc, tc, args.out, val_rows=val_rows, resume_from=args.resume)
    summary = {
        "steps_run": result.steps_run,
        "final_val_ts_wer": result.final_val_wer,
        "best_checkpoint": str(result.best_path),
        "last_checkpoint": str(result.last_path),
        "metrics": str(result.metrics_path),
    }
    if args.json:
        print(json.dumps(summary))
    else:
        print(
            f"trained {result.steps_run} steps; validation TS-WER "
            f"{result.final_val_wer}%; best at {result.best_path}"
        )
    return 0


def cmd_eval(args) -> int:
    model = _model_from_checkpoint(args.checkpoint)
    rows = load_manifest(args.manifest)
    report = ts_eval(
        rows,
        Transcriber(model),
        _aux_policy(args),
        multi_target=args.multi_target,
        only_speaker=args.target_speaker,
    )
    payload = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    if args.json:
        print(json.dumps(payload))
    else:
        c = report.corpus
        print(
            f"TS-WER {report.ts_wer_percent:.2f}% over {c.n_ref_words} words "
            f"(S={c.substitutions} I={c.insertions} D={c.deletions}, "
            f"{len(report.per_example)} inferences)"
        )
    return 0


def _transcribe_from_args(args):
    model = _model_from_checkpoint(args.checkpoint)
    mixture = read_wav(args.mixture)
    auxes = [read_wav(p) for p in args.aux]
    return Transcriber(model).transcribe(mixture, auxes)


def cmd_transcribe(args) -> int:
    hyp = _transcribe_from_args(args)
    if args.json:
        print(json.dumps({"text": hyp.text, "tokens": list(hyp.tokens),
                          "frames": list(hyp.frame_alignment)}))
    else:
        print(hyp.text if hyp.tokens else "(empty hypothesis)")
    return 0


def cmd_align(args) -> int:
    hyp = _transcribe_from_args(args)
    write_alignment_csv(hyp, args.out)
    n_frames = hyp.frame_posteriors.shape[0]
    if args.json:
        print(json.dumps({"out": str(args.out), "frames": n_frames, "text": hyp.text}))
    else:
        print(f"wrote per-frame posteriors for {n_frames} frames to {args.out}")
    return 0


def cmd_sweep_snr(args) -> int:
    cfg = corpus_config(load_config_file(args.config))
    model = _model_from_checkpoint(args.checkpoint)
    try:
        snrs = [float(s) for s in args.snr_list.split(",") if s.strip()]
    except ValueError:
        print("error: --snr-list expects comma-separated numbers", file=sys.stderr)
        return 2
    if not snrs:
        print("error: --snr-list is empty", file=sys.stderr)
        return 2
    workdir = Path(args.workdir) if args.workdir else Path(args.out).parent / "sweep_corpora"
    curve = snr_sweep(cfg, args.seed, Transcriber(model), snrs, workdir, _aux_policy(args))
    write_sweep_csv(curve, args.out)
    if args.json:
        print(json.dumps(curve))
    else:
        for point in curve:
            print(f"snr {point['snr_db']:+6.1f} dB  ->  ts-wer {point['ts_wer']:.2f}%")
    return 0


def cmd_count_params(args) -> int:
    if args.checkpoint:
        model = _model_from_checkpoint(args.checkpoint)
    else:
        mc = model_config(load_config_file(args.config), preset=args.preset)
        model = TsAsrModel(mc, seed=0)
    counts = count_parameters(model)
    if args.json:
        print(json.dumps(counts))
    else:
        width = max(len(k) for k in counts)
        for name, count in counts.items():
            print(f"{name:<{width}}  {count:>12,}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsasr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="INI config file (flags override it)")
        p.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
        return p

    p = add("synth", cmd_synth, "build a deterministic synthetic mixture corpus")
    p.add_argument("--out", required=True, help="output directory for WAVs + manifest")
    p.add_argument("--seed", type=int, default=0, help="corpus build seed")
    p.add_argument("--examples", type=int, help="number of mixtures")
    p.add_argument("--speakers", type=int, help="number of speakers")
    p.add_argument("--protocol", choices=["wsj0", "libri"], help="mixing protocol")
    p.add_argument("--n-mix", type=int, dest="n_mix", help="speakers per mixture (2 or 3)")

    p = add("train", cmd_train, "train a model on a corpus manifest")
    p.add_argument("--manifest", required=True, help="training manifest (JSONL)")
    p.add_argument("--out", required=True, help="run directory for checkpoints + metrics")
    p.add_argument("--val-manifest", help="held-out manifest for validation TS-WER")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--seed", type=int, help="training seed")
    p.add_argument("--steps", type=int, help="total optimizer steps")
    p.add_argument("--batch-size", type=int, dest="batch_size", help="examples per step")
    p.add_argument("--w-spec", type=float, dest="w_spec",
                   help="reconstruction loss weight (0 disables)")
    p.add_argument("--freeze-speaker-encoder", action="store_true",
                   help="do not update speaker-encoder weights")
    p.add_argument("--no-spec-augment", action="store_true", help="disable SpecAugment")

    def add_eval_like(name, func, help_text):
        p = add(name, func, help_text)
        p.add_argument("--checkpoint", required=True, help="model checkpoint")
        p.add_argument("--aux-count", type=int, default=1, dest="aux_count",
                       help="auxiliary utterances to enroll with (1 or 2)")
        p.add_argument("--aux-seconds", type=float, dest="aux_seconds",
                       help="cap on total auxiliary audio length")
        return p

    p = add_eval_like("eval", cmd_eval, "score TS-WER over a manifest")
    p.add_argument("--manifest", required=True, help="evaluation manifest (JSONL)")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--multi-target", action="store_true",
                   help="score every mixture speaker as the target")
    p.add_argument("--target-speaker", dest="target_speaker",
                   help="only score mixtures containing this speaker, targeted at them")

    for name, func, text in (
        ("transcribe", cmd_transcribe, "transcribe one mixture given auxiliary audio"),
        ("align", cmd_align, "export per-frame posterior alignment as CSV"),
    ):
        p = add(name, func, text)
        p.add_argument("--checkpoint", required=True, help="model checkpoint")
        p.add_argument("--mixture", required=True, help="mixture WAV")
        p.add_argument("--aux", required=True, action="append",
                       help="auxiliary WAV of the target speaker (repeatable)")
        if name == "align":
            p.add_argument("--out", required=True, help="output CSV path")

    p = add_eval_like("sweep-snr", cmd_sweep_snr, "TS-WER curve across mixing SNRs")
    p.add_argument("--snr-list", required=True, dest="snr_list",
                   help="comma-separated SNRs in dB, e.g. -5,0,5,10")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0, help="corpus rebuild seed")
    p.add_argument("--workdir", help="where rebuilt sweep corpora are written")

    p = add("count-params", cmd_count_params, "parameter counts per submodule")
    p.add_argument("--preset", choices=["desk", "paper"], default=None,
                   help="model preset when no config/checkpoint is given")
    p.add_argument("--checkpoint", help="count the parameters of a checkpointed model")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TsasrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
