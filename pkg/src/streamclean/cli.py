"""Command line entry point: ``streamclean run|sweep|report|gen-data``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .stream import generate_gaussian_blobs, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# CLI flag -> config key it overrides
_FLAG_KEYS = {
    "method": "method",
    "seed": "seed",
    "n_repeats": "n_repeats",
    "noise_rate": "noise_rate",
    "strong_cost": "selection.strong_cost",
    "budget": "selection.budget",
    "q_threshold": "selection.q_threshold",
    "max_weak": "selection.max_weak_per_sample",
    "classifier": "classifier.variant",
    "hidden_units": "classifier.hidden_units",
    "csv": "data.path",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser, with_method: bool = True) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. selection.budget=50 (repeatable)")
    if with_method:
        p.add_argument("--method", choices=harness.METHODS)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-repeats", type=int)
    p.add_argument("--noise-rate", type=float)
    p.add_argument("--strong-cost", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--q-threshold", type=float)
    p.add_argument("--max-weak", type=int)
    p.add_argument("--classifier", choices=("softmax_linear", "mlp"))
    p.add_argument("--hidden-units", type=int)
    p.add_argument("--csv", help="read data from this CSV instead of generating it")


def _config(args) -> harness.ExperimentConfig:
    overrides = list(args.overrides)
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    if getattr(args, "csv", None):
        overrides.append("data.source=csv")
    return harness.load_config(args.config, overrides)


def cmd_run(args) -> int:
    cfg = _config(args)
    out = harness.run_experiment(cfg, args.out)
    print(harness.report([out]), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    dirs = harness.sweep(cfg, args.out, args.methods or list(harness.METHODS),
                         args.noise_rates or [cfg.noise_rate],
                         args.strong_costs or [cfg.selection.strong_cost])
    print(harness.report(dirs, csv_path=Path(args.out) / "report.csv"), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    dirs = []
    for d in args.run_dirs:
        d = Path(d)
        if (d / "config.yaml").exists():
            dirs.append(d)
        else:
            found = sorted(p.parent for p in d.glob("*/config.yaml"))
            if not found:
                raise FileNotFoundError(f"{d}: no run directories found")
            dirs.extend(found)
    text = harness.report(dirs, csv_path=args.csv)
    print(text, end="")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    ds = generate_gaussian_blobs(args.n_classes, args.n_features, args.n_samples,
                                 args.separation, seed=args.seed)
    write_csv(args.out, ds)
    print(f"wrote {len(ds)} samples to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streamclean", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    _add_config_flags(p)
    p.add_argument("--out", type=Path, required=True, help="run directory to write")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over methods, noise rates and strong costs")
    _add_config_flags(p, with_method=False)
    p.add_argument("--methods", nargs="+", choices=harness.METHODS)
    p.add_argument("--noise-rates", nargs="+", type=float)
    p.add_argument("--strong-costs", nargs="+", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate run directories into a table")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--csv", type=Path, help="also write the table as CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-data", help="export a synthetic Gaussian-blob CSV")
    p.add_argument("--n-classes", type=int, default=8)
    p.add_argument("--n-features", type=int, default=16)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
