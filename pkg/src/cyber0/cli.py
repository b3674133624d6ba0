"""Command-line front end: ``run``, ``dry-run`` and ``verify``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import fedsim, verify
from .config import ConfigError, dumps, load_datasets, parse_config
from .data import DATA_DIR_ENV, mnist_available
from .model import MulticlassLogistic

FETCH_HINT = (
    "MNIST IDX files not found. Place train-images-idx3-ubyte, train-labels-idx1-ubyte,\n"
    "t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte (optionally .gz) in a directory and\n"
    f"point dataset.path or ${DATA_DIR_ENV} at it (default ~/data/mnist). One source is the\n"
    "npm package 'mnist-data':  npm pack mnist-data && tar xzf mnist-data-*.tgz  (files in package/data)."
)


def metrics_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fedsim.MetricsRecord.FIELDS)
    for r in records:
        writer.writerow([r.epoch, r.seed, repr(r.accuracy), repr(r.train_loss),
                         r.uplink_scalars, r.downlink_scalars, r.wall_ms])
    return buf.getvalue()


def summarize(per_seed: dict[int, list]) -> dict:
    """Mean and population std across seeds of each seed's max and final accuracy."""
    best = np.array([fedsim.max_accuracy(recs) for recs in per_seed.values()])
    final = np.array([recs[-1].accuracy for recs in per_seed.values()])
    last = next(iter(per_seed.values()))[-1]
    return {
        "seeds": list(per_seed),
        "max_accuracy": {"mean": float(best.mean()), "std": float(best.std()),
                         "per_seed": [float(v) for v in best]},
        "final_accuracy": {"mean": float(final.mean()), "std": float(final.std()),
                           "per_seed": [float(v) for v in final]},
        "uplink_scalars_per_client": last.uplink_scalars,
        "downlink_scalars": last.downlink_scalars,
    }


def summary_csv(summary: dict) -> str:
    lines = ["metric,mean,std"]
    for key in ("max_accuracy", "final_accuracy"):
        lines.append(f"{key},{summary[key]['mean']!r},{summary[key]['std']!r}")
    return "\n".join(lines) + "\n"


def _model_dim(config) -> int:
    if config.dataset.name == "mnist":
        features = 784
        classes = 10
    else:
        features, classes = config.dataset.features, config.dataset.classes
    return MulticlassLogistic(classes, features, config.dataset.bias).dim


def forecast(config) -> str:
    d = _model_dim(config)
    per_epoch = config.uplink_per_epoch(d)
    total = per_epoch * config.T
    dense = d * config.T
    return "\n".join([
        f"model dimension d = {d}",
        f"uplink per client per global epoch = {per_epoch} scalars ({config.strategy.value})",
        f"uplink per client over T={config.T} = {total} scalars",
        f"downlink over T={config.T} = {total} scalars",
        f"dense-gradient equivalent = {dense} scalars (ratio {total / dense:.6g})",
    ])


def _load_config(args):
    overrides = list(args.set or [])
    if getattr(args, "timing", False):
        overrides.append("timing=true")
    return parse_config(args.config, overrides)


def cmd_dry_run(args) -> int:
    config = _load_config(args)
    sys.stdout.write(dumps(config))
    print(forecast(config))
    return 0


def cmd_run(args) -> int:
    config = _load_config(args)
    if config.dataset.name == "mnist" and not mnist_available(config.dataset.path):
        print(FETCH_HINT, file=sys.stderr)
        return 2
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        print(f"error: output directory {out} is not empty (use --force to replace)", file=sys.stderr)
        return 2
    # write into a sibling staging directory so a failed run leaves nothing behind
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    try:
        (staging / "config.json").write_text(dumps(config))
        per_seed = {}
        for seed in config.seeds:
            datasets = load_datasets(config.dataset, seed)
            records = fedsim.run_seed(config, seed, datasets)
            per_seed[seed] = records
            (staging / f"metrics_seed{seed}.csv").write_text(metrics_csv(records))
            if not args.quiet:
                print(f"seed {seed}: max accuracy {fedsim.max_accuracy(records):.4f}, "
                      f"final {records[-1].accuracy:.4f}", file=sys.stderr)
        summary = summarize(per_seed)
        (staging / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (staging / "summary.csv").write_text(summary_csv(summary))
        if out.exists():
            shutil.rmtree(out)
        staging.rename(out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    print(f"max accuracy {summary['max_accuracy']['mean']:.4f} ± {summary['max_accuracy']['std']:.4f} "
          f"over {len(per_seed)} seed(s); outputs in {out}")
    return 0


def cmd_verify(args) -> int:
    return 0 if verify.run_suite(args.suite) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyber0", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def config_flags(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key by dot path, e.g. --set rule.base=krum (repeatable)")

    run = sub.add_parser("run", help="train and write metrics")
    config_flags(run)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--force", action="store_true", help="replace a non-empty output directory")
    run.add_argument("--timing", action="store_true", help="record wall-clock ms (outputs no longer byte-stable)")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    dry = sub.add_parser("dry-run", help="print the resolved config and communication forecast")
    config_flags(dry)
    dry.set_defaults(func=cmd_dry_run)

    ver = sub.add_parser("verify", help="run a property suite")
    ver.add_argument("suite", choices=[*verify.SUITES, "all"])
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
