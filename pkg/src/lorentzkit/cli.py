"""Command-line entry point.

Exit status: 0 on success, 2 for configuration errors, 3 when a run is
aborted for numeric reasons.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import training
from .config import FIELDS, load_config
from .data import gen_synthetic_hierarchy, load_dataset, save_dataset
from .errors import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    DegenerateHyperplaneError,
    DimensionError,
    NumericDomainError,
    NumericError,
    StateError,
    TrainingAborted,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# Flags exposed on every subcommand; each maps to a config key of the same name.
OVERRIDE_KEYS = [name for name in FIELDS if name not in ("seed", "task")]


class _ArgParser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def build_parser():
    common = _ArgParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="random seed (required for every command)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    for key in OVERRIDE_KEYS:
        common.add_argument("--" + key.replace("_", "-"), dest=f"cfg_{key}", metavar="VALUE")
    parser = _ArgParser(prog="lorentzkit", description="Fully hyperbolic Lorentz networks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgParser)
    sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic hierarchy dataset")
    sub.add_parser("train", parents=[common], help="train a model")
    sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    sub.add_parser("bench-norm", parents=[common], help="time normalization variants")
    sub.add_parser("export-embeddings", parents=[common], help="dump penultimate embeddings")
    return parser


def _resolve(args):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    for key in OVERRIDE_KEYS:
        value = getattr(args, f"cfg_{key}")
        if value is not None:
            overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    overrides["task"] = args.command
    cfg = load_config(args.config, overrides)
    cfg.require_seed()
    out = args.out or os.path.join("runs", args.command)
    return cfg, out


def _gen_synthetic(cfg, out, say):
    train, test = gen_synthetic_hierarchy(cfg.depth, cfg.branching, cfg.dim, cfg.samples_per_leaf,
                                          cfg.noise, cfg.seed)
    save_dataset(out, train, test, cfg.dataset_format)
    say(f"dataset={out} classes={train.class_count} dim={train.dim} "
        f"train={len(train)} test={len(test)}")


def _train(cfg, out, say):
    result = training.train(cfg, out, log=say)
    with open(os.path.join(out, "run.txt"), "w") as fh:
        fh.write(f"seed={cfg.seed}\nconfig_hash={cfg.config_hash()}\n")
        if result.final:
            for name, value in zip(training.METRICS_HEADER, result.final):
                fh.write(f"{name}={value!r}\n")
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())
    if cfg.figures and result.history:
        from .plotting import plot_training_curves
        plot_training_curves(result.history, os.path.join(out, "training_curves.png"))
    say(f"checkpoint={result.checkpoint} metrics={result.metrics_path} seed={cfg.seed}")


def _checkpoint_path(cfg, out):
    path = cfg.checkpoint or os.path.join(out, training.CHECKPOINT_NAME)
    if os.path.isdir(path):
        path = os.path.join(path, training.CHECKPOINT_NAME)
    return path


def _dataset_for(cfg):
    if not cfg.dataset:
        raise ConfigurationError("no dataset given (--dataset)")
    return load_dataset(cfg.dataset, cfg.split)


def _eval(cfg, out, say):
    report = training.evaluate(_checkpoint_path(cfg, out), _dataset_for(cfg))
    say(f"split={cfg.split} accuracy={report['accuracy']!r} mcc={report['mcc']!r}")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, f"eval_{cfg.split}.txt"), "w") as fh:
        fh.write(f"accuracy={report['accuracy']!r}\nmcc={report['mcc']!r}\n")
        fh.write("confusion=\n")
        np.savetxt(fh, report["confusion"], fmt="%d", delimiter=",")


def _bench(cfg, out, say):
    records = training.bench_norm(cfg)
    text = training.format_bench(records)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "bench_norm.txt"), "w") as fh:
        fh.write(text)
    if cfg.figures:
        from .plotting import plot_bench
        plot_bench(records, os.path.join(out, "bench_norm.png"))
    say(text.rstrip("\n"))


def _export(cfg, out, say):
    os.makedirs(out, exist_ok=True)
    dataset = _dataset_for(cfg)
    path = os.path.join(out, f"embeddings_{cfg.split}.csv")
    ball, _, _ = training.export_embeddings(_checkpoint_path(cfg, out), dataset, path)
    if cfg.figures:
        from .plotting import plot_embeddings
        plot_embeddings(ball, dataset.labels, os.path.join(out, f"embeddings_{cfg.split}.png"))
    say(f"embeddings={path} rows={len(dataset)}")


COMMANDS = {"gen-synthetic": _gen_synthetic, "train": _train, "eval": _eval,
            "bench-norm": _bench, "export-embeddings": _export}


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr

    def say(msg):
        print(msg, file=stdout, flush=True)

    try:
        args = build_parser().parse_args(argv)
        cfg, out = _resolve(args)
        # non-finite values are detected explicitly and reported through exit code 3
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            COMMANDS[args.command](cfg, out, say)
    except (ConfigurationError, DimensionError, ContractError, StateError, OSError) as exc:
        print(f"configuration error: {exc}", file=stderr)
        return EXIT_CONFIG
    except TrainingAborted as exc:
        where = f" (parameter {exc.parameter})" if exc.parameter else ""
        print(f"training aborted{where}: {exc}", file=stderr)
        return EXIT_NUMERIC
    except (NumericError, NumericDomainError, ConvergenceError, DegenerateHyperplaneError) as exc:
        print(f"numeric error: {exc}", file=stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
