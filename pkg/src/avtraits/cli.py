"""Command line: synth, prepare, train, eval, robustness.

Every command prints the comma-separated report table used throughout
the metrics module and exits 0 on success; failures print a one-line
diagnostic on stderr and exit 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .datastore import (
    Dataset,
    SynthConfig,
    load_dataset,
    load_manifest,
    load_samples,
    prepare_cache,
    synth_dataset,
)
from .errors import InputError, PipelineError
from .frontend import FrontendConfig
from .mas import SCENARIOS, cli_tag, scenario_from_cli
from .metrics import (
    evaluate_model,
    evaluate_scenario,
    format_table,
    per_trait_accuracy,
    robustness_report,
)
from .trainer import TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avtraits",
        description="Audio-visual Big Five trait regression pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--k-frames", type=int, default=SynthConfig.k_frames)
    p.add_argument("--frame-size", type=int, default=SynthConfig.frame_size)
    p.add_argument("--audio-seconds", type=float, default=SynthConfig.audio_seconds)

    p = sub.add_parser("prepare", help="cache model-ready features for a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--k-frames", type=int, default=FrontendConfig.k_frames)
    p.add_argument("--frame-size", type=int, default=FrontendConfig.frame_size)

    p = sub.add_parser("train", help="train a model from a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-msfem", action="store_true", help="ablation: plain 3x3 conv enhancer")
    p.add_argument("--no-mas", action="store_true", help="ablation: no modality augmentation")
    p.add_argument("--cache", type=Path, default=None, help="feature cache directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--split", choices=["train", "val", "test"], required=True)
    p.add_argument("--json", type=Path, default=None, help="also write a structured report")

    p = sub.add_parser("robustness", help="evaluate a checkpoint under corruption scenarios")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--scenario", type=str, default=None,
                   help=f"one of {', '.join(cli_tag(s) for s in SCENARIOS)}")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--json", type=Path, default=None, help="also write a structured report")

    return parser


def _split_samples(manifest: Path, split: str, config: FrontendConfig):
    entries = [e for e in load_manifest(manifest) if e.split == split]
    if not entries:
        raise InputError(f"manifest has no entries in split {split!r}")
    return load_samples(entries, config)


def _cmd_synth(args) -> int:
    config = SynthConfig(
        k_frames=args.k_frames, frame_size=args.frame_size, audio_seconds=args.audio_seconds
    )
    manifest = synth_dataset(args.n, args.seed, args.out, config)
    print(f"wrote {args.n} samples under {args.out} (manifest: {manifest})")
    return 0


def _cmd_prepare(args) -> int:
    config = FrontendConfig(k_frames=args.k_frames, frame_size=args.frame_size)
    entries = load_manifest(args.manifest)
    count = prepare_cache(entries, config, args.out)
    print(f"cached {count} samples in {args.out} (config hash {config.config_hash()[:12]})")
    return 0


def _cmd_train(args) -> int:
    config = TrainConfig.from_file(args.config)
    if args.no_msfem:
        config = TrainConfig(**{**config.__dict__, "use_msfem": False})
    if args.no_mas:
        config = TrainConfig(**{**config.__dict__, "use_mas": False})
    dataset: Dataset = load_dataset(args.manifest, config.frontend_config(), cache_dir=args.cache)
    result = train(dataset, config)
    save_checkpoint(args.out, result.best)
    model = result.best.build_model()
    eval_samples = dataset.val or dataset.train
    accs = per_trait_accuracy(evaluate_model(model, eval_samples))
    avg = float(accs.mean())
    print(f"best epoch {result.best.epoch} of {config.epochs}; checkpoint: {args.out}")
    print(format_table([("clean", accs, avg, 1.0 - avg)]))
    return 0


def _cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    samples = _split_samples(args.manifest, args.split, checkpoint.config.frontend_config())
    accs = per_trait_accuracy(evaluate_model(checkpoint.build_model(), samples))
    avg = float(accs.mean())
    print(format_table([("clean", accs, avg, 1.0 - avg)]))
    if args.json:
        import json

        payload = {
            "split": args.split,
            "accuracy": {t: a for t, a in zip("ENACO", accs)},
            "average": avg,
            "mae": 1.0 - avg,
        }
        args.json.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _cmd_robustness(args) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    model = checkpoint.build_model()
    samples = _split_samples(args.manifest, args.split, checkpoint.config.frontend_config())
    if args.scenario is not None:
        scenario = scenario_from_cli(args.scenario)
        row = evaluate_scenario(model, samples, scenario, args.seed)
        print(format_table([(row.scenario, row.accuracies, row.average, row.mae)]))
        return 0
    report = robustness_report(model, samples, args.seed)
    print(report.to_table())
    if args.json:
        args.json.write_text(report.to_json())
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "robustness": _cmd_robustness,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
