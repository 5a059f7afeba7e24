"""Command line interface.

Subcommands: generate, train, evaluate, compare-inputs, compare-methods,
sweep-sensors, sweep-placement. Exit codes: 0 success, 2 usage or config
error, 3 data error (missing or corrupt datasets, mismatched
checkpoints), 4 internal error.

The EMTECAUSE_OUT environment variable, when set, is prepended to every
relative output path, giving one switchable output root.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError
from .gridgen import build_dataset, load_manifest, load_records, parse_generator_config
from .harness import (
    compare_inputs,
    compare_methods,
    evaluate_model,
    evaluation_artifacts,
    images_for_case,
    labels_of,
    parse_experiment_config,
    stratified_split,
    sweep_placement,
    sweep_sensors,
    train_one,
)
from .models import ModelKind, eval_log_csv, load_model, save_model, train_log_csv
from .preprocess import InputCase

OUT_ROOT_ENV = "EMTECAUSE_OUT"


def resolve_out(path: str | Path) -> Path:
    """Apply the output-root override to relative paths."""
    path = Path(path)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _cmd_generate(args) -> int:
    out_dir = str(resolve_out(args.out)) if args.out else None
    config = parse_generator_config(args.config, out_dir=out_dir)
    if not args.out:
        config.out_dir = str(resolve_out(config.out_dir))
    manifest = build_dataset(config, args.seed)
    path = Path(config.out_dir) / "manifest.json"
    print(f"wrote {len(manifest.records)} records, manifest {path}")
    return 0


def _load_images(dataset: str, case: InputCase):
    manifest = load_manifest(dataset)
    root = Path(dataset)
    if not root.is_dir():
        root = root.parent
    records = load_records(manifest, root)
    return manifest, images_for_case(records, case), labels_of(records)


def _cmd_train(args) -> int:
    case = InputCase(args.case)
    kind = ModelKind(args.model)
    manifest, images, labels = _load_images(args.dataset, case)
    train_idx, test_idx = stratified_split(labels, manifest.split_fraction, args.seed)
    model = train_one(
        kind,
        case,
        images[train_idx],
        labels[train_idx],
        args.seed,
        args.preset,
        eval_set=(images[test_idx], labels[test_idx]) if test_idx.size else None,
    )
    model.meta["split_seed"] = args.seed
    model.meta["split_fraction"] = manifest.split_fraction
    model.meta["dataset_master_seed"] = manifest.master_seed

    out = resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"model_{kind.value}_{case.value}_seed{args.seed}.ckpt"
    save_model(model, ckpt)
    (out / "trainlog.csv").write_text(train_log_csv(model))
    if model.eval_log:
        (out / "evallog.csv").write_text(eval_log_csv(model))
    print(f"checkpoint {ckpt}")
    return 0


def _cmd_evaluate(args) -> int:
    model = load_model(args.checkpoint)
    if model.case is None:
        raise DataError(f"{args.checkpoint}: checkpoint does not name its input case")
    manifest, images, labels = _load_images(args.dataset, model.case)
    if images.shape[1:] != tuple(model.input_shape):
        raise DataError(
            f"checkpoint expects images {tuple(model.input_shape)}, "
            f"dataset yields {images.shape[1:]}"
        )
    split_seed = model.meta.get("split_seed")
    if split_seed is None:
        raise DataError(f"{args.checkpoint}: checkpoint does not record its split seed")
    fraction = model.meta.get("split_fraction", manifest.split_fraction)
    _, test_idx = stratified_split(labels, fraction, int(split_seed))
    if test_idx.size == 0:
        raise DataError("dataset leaves no held-out events under the recorded split")
    cm, report = evaluate_model(model, images[test_idx], labels[test_idx])
    out = resolve_out(args.out)
    evaluation_artifacts(cm, report, out)
    print(f"held-out accuracy {100 * report.accuracy:.1f}% over {test_idx.size} events")
    print(f"report {out / 'report.txt'}")
    return 0


def _experiment_cmd(runner, table_name: str):
    def cmd(args) -> int:
        out_dir = str(resolve_out(args.out)) if args.out else None
        config = parse_experiment_config(args.config, out_dir=out_dir, seed_override=args.seed)
        if not args.out:
            config.out_dir = str(resolve_out(config.out_dir))
        runner(config)
        print(f"wrote {Path(config.out_dir) / table_name}")
        return 0

    return cmd


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emtecause",
        description="Synthesize transient-event datasets, train classifiers, run comparisons.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build a dataset from a generator config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory (overrides config out_dir)")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train one model on one input case")
    p.add_argument("--dataset", required=True, help="dataset directory or manifest path")
    p.add_argument("--model", choices=[k.value for k in ModelKind], default="cnn")
    p.add_argument("--case", choices=[c.value for c in InputCase], default="2dw")
    p.add_argument("--preset", choices=["rtds", "emtp"], default="rtds")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="run")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on its held-out split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default="run")
    p.set_defaults(func=_cmd_evaluate)

    for name, runner, table in (
        ("compare-inputs", compare_inputs, "inputs_table.csv"),
        ("compare-methods", compare_methods, "methods_table.csv"),
        ("sweep-sensors", sweep_sensors, "sensors_table.csv"),
        ("sweep-placement", sweep_placement, "placement_table.csv"),
    ):
        p = sub.add_parser(name, help=f"run the {name.replace('-', ' ')} experiment")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="replace the config's seed list")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.set_defaults(func=_experiment_cmd(runner, table))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # internal
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
