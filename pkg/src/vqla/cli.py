"""Command-line interface.

Verbs: ``train``, ``eval``, ``robust``, ``ablate``, ``fps``, ``corrupt``
and ``dataio`` (with ``synth``/``validate`` subcommands). The output root
defaults to $VQLA_OUT or the working directory; integrity errors exit
nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .ablation import SUITES, format_ablation_table, run_ablation
from .config import TrainConfig, apply_overrides, default_config, load_config
from .corruptions import ALL_KINDS, corrupt_dataset
from .dataio import (
    SyntheticConfig,
    build_vocabs,
    ensure_disjoint,
    generate_synthetic,
    load_manifest,
    load_samples,
)
from .exceptions import VQLAError
from .model import load_checkpoint, save_checkpoint
from .robustness import format_kind_table, format_severity_table, robustness_sweep
from .training import evaluate, measure_fps, train


def _output_root(explicit: str | None) -> Path:
    root = Path(explicit or os.environ.get("VQLA_OUT", "."))
    root.mkdir(parents=True, exist_ok=True)
    return root


def _resolve_config(args) -> TrainConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else default_config()
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "box", None):
        overrides.append(f"loss.box={args.box}")
    if getattr(args, "qa", None):
        overrides.append(f"loss.qa={args.qa}")
    if getattr(args, "uncertainty", None):
        overrides.append(f"loss.uncertainty={args.uncertainty}")
    if getattr(args, "adversarial", None):
        overrides.append(f"adversarial.enabled={args.adversarial}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "steps", None) is not None:
        overrides.append(f"max_steps={args.steps}")
    return apply_overrides(cfg, overrides)


def _load_splits(data_dir: str):
    data = Path(data_dir)
    train_manifest = load_manifest(data / "train.manifest")
    test_manifest = load_manifest(data / "test.manifest")
    ensure_disjoint(train_manifest, test_manifest)
    questions = [r.question for r in train_manifest.records]
    answers = [r.answer for r in train_manifest.records]
    question_vocab, answer_vocab = build_vocabs(questions, answers)
    train_samples = load_samples(train_manifest, answer_vocab)
    test_samples = load_samples(test_manifest, answer_vocab)
    return train_samples, test_samples, question_vocab, answer_vocab


def _severities(text: str) -> list[int]:
    if ".." in text:
        low, high = text.split("..")
        return list(range(int(low), int(high) + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def _kinds(text: str) -> list[str]:
    if text == "all":
        return list(ALL_KINDS)
    return [part.strip() for part in text.split(",") if part.strip()]


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = _output_root(args.out)
    train_samples, test_samples, question_vocab, answer_vocab = _load_splits(args.data)
    result = train(cfg, train_samples, test_samples, question_vocab, answer_vocab)
    ckpt_path = out / "checkpoint.pt"
    save_checkpoint(
        ckpt_path,
        result.model,
        result.objective.state_dict(),
        question_vocab,
        answer_vocab,
        extra={"best_val_accuracy": result.best_val_accuracy, "steps": result.steps},
    )
    (out / "history.json").write_text(json.dumps(result.history))
    (out / "report.json").write_text(result.final_report.to_json())
    print(f"trained {result.steps} steps; best val accuracy {result.best_val_accuracy:.4f}")
    print(f"checkpoint: {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    for manifest_path in args.manifest:
        manifest = load_manifest(manifest_path)
        samples = load_samples(manifest, bundle.answer_vocab)
        report = evaluate(bundle.model, samples, bundle.question_vocab)
        print(f"== {manifest_path}")
        print(report.to_json())
        if args.out:
            out = _output_root(args.out)
            name = Path(manifest_path).stem
            (out / f"report_{name}.json").write_text(report.to_json())
    return 0


def cmd_robust(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    samples = load_samples(manifest, bundle.answer_vocab)
    report = robustness_sweep(
        bundle.model,
        samples,
        bundle.question_vocab,
        kinds=_kinds(args.kinds),
        severities=_severities(args.severities),
        seed=args.seed,
    )
    print(format_kind_table(report))
    print()
    print(format_severity_table(report))
    if args.out:
        out = _output_root(args.out)
        (out / "robustness.json").write_text(report.to_json())
    return 0


def cmd_corrupt(args) -> int:
    manifest = load_manifest(args.manifest)
    out = _output_root(args.out)
    manifests, failures = corrupt_dataset(
        manifest,
        kinds=_kinds(args.kinds),
        severities=_severities(args.severities),
        out_dir=out,
        seed=args.seed,
    )
    print(f"wrote {len(manifests)} corrupted subtrees under {out}")
    for frame_id, error in failures:
        print(f"failed {frame_id}: {error}", file=sys.stderr)
    return 0 if not failures else 1


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    if args.epochs is not None:
        cfg.epochs = args.epochs
    train_samples, test_samples, question_vocab, answer_vocab = _load_splits(args.data)
    rows = run_ablation(args.suite, cfg, train_samples, test_samples, question_vocab, answer_vocab)
    print(format_ablation_table(args.suite, rows))
    if args.out:
        out = _output_root(args.out)
        (out / f"ablation_{args.suite}.json").write_text(json.dumps(rows))
    return 0


def cmd_fps(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    samples = load_samples(manifest, bundle.answer_vocab)
    report = measure_fps(bundle.model, samples[0], bundle.question_vocab, args.iters)
    print(json.dumps(report.to_dict()))
    return 0


def cmd_dataio(args) -> int:
    if args.dataio_command == "synth":
        cfg = SyntheticConfig()
        if args.config:
            data = json.loads(Path(args.config).read_text())
            for key, value in data.items():
                if not hasattr(cfg, key):
                    raise VQLAError(f"unknown synthetic config key {key!r}")
                setattr(cfg, key, tuple(value) if isinstance(value, list) else value)
        if args.seed is not None:
            cfg.seed = args.seed
        dataset = generate_synthetic(cfg)
        out = _output_root(args.out)
        dataset.save(out)
        print(
            f"wrote {len(dataset.train)} train / {len(dataset.test)} test samples to {out}"
        )
        return 0
    if args.dataio_command == "validate":
        manifests = [load_manifest(path) for path in args.manifest]
        for path, manifest in zip(args.manifest, manifests):
            print(f"{path}: {len(manifest)} records, image size {manifest.image_size}")
        if len(manifests) >= 2:
            for i in range(len(manifests)):
                for j in range(i + 1, len(manifests)):
                    ensure_disjoint(manifests[i], manifests[j])
            print("splits are disjoint")
        return 0
    raise VQLAError(f"unknown dataio subcommand {args.dataio_command!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqla", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", help="train a model on a manifest pair")
    train_p.add_argument("--data", required=True, help="directory with train/test manifests")
    train_p.add_argument("--config", help="config file (flat key=value or JSON)")
    train_p.add_argument("--out", help="output directory (default $VQLA_OUT)")
    train_p.add_argument("--seed", type=int)
    train_p.add_argument("--steps", type=int, help="cap the number of optimizer steps")
    train_p.add_argument("--box", choices=["giou", "l1+giou", "iou", "diou", "ciou"])
    train_p.add_argument("--qa", choices=["ce", "focal"])
    train_p.add_argument("--uncertainty", choices=["on", "off"])
    train_p.add_argument("--adversarial", choices=["on", "off"])
    train_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    train_p.set_defaults(func=cmd_train)

    eval_p = sub.add_parser("eval", help="evaluate a checkpoint on one or more manifests")
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--manifest", required=True, nargs="+")
    eval_p.add_argument("--out")
    eval_p.set_defaults(func=cmd_eval)

    robust_p = sub.add_parser("robust", help="corruption robustness sweep")
    robust_p.add_argument("--checkpoint", required=True)
    robust_p.add_argument("--manifest", required=True)
    robust_p.add_argument("--kinds", default="all")
    robust_p.add_argument("--severities", default="1..5")
    robust_p.add_argument("--seed", type=int, default=0)
    robust_p.add_argument("--out")
    robust_p.set_defaults(func=cmd_robust)

    corrupt_p = sub.add_parser("corrupt", help="write corrupted dataset copies")
    corrupt_p.add_argument("--manifest", required=True)
    corrupt_p.add_argument("--kinds", default="all")
    corrupt_p.add_argument("--severities", default="1..5")
    corrupt_p.add_argument("--seed", type=int, default=0)
    corrupt_p.add_argument("--out", required=True)
    corrupt_p.set_defaults(func=cmd_corrupt)

    ablate_p = sub.add_parser("ablate", help="run an ablation suite")
    ablate_p.add_argument("--suite", required=True, choices=SUITES)
    ablate_p.add_argument("--data", required=True)
    ablate_p.add_argument("--config")
    ablate_p.add_argument("--epochs", type=int, default=10)
    ablate_p.add_argument("--out")
    ablate_p.add_argument("--seed", type=int)
    ablate_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    ablate_p.set_defaults(func=cmd_ablate)

    fps_p = sub.add_parser("fps", help="measure single-stream inference speed")
    fps_p.add_argument("--checkpoint", required=True)
    fps_p.add_argument("--manifest", required=True)
    fps_p.add_argument("--iters", type=int, default=100)
    fps_p.set_defaults(func=cmd_fps)

    dataio_p = sub.add_parser("dataio", help="synthetic data and manifest tools")
    dataio_sub = dataio_p.add_subparsers(dest="dataio_command", required=True)
    synth_p = dataio_sub.add_parser("synth", help="generate a synthetic dataset")
    synth_p.add_argument("--config", help="JSON file of SyntheticConfig overrides")
    synth_p.add_argument("--out", required=True)
    synth_p.add_argument("--seed", type=int)
    validate_p = dataio_sub.add_parser("validate", help="parse and cross-check manifests")
    validate_p.add_argument("manifest", nargs="+")
    dataio_p.set_defaults(func=cmd_dataio)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VQLAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
