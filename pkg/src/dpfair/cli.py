"""Command-line entry point: ``dpfair <subcommand> [options]``.

Settings are resolved in increasing priority: built-in defaults, a
``--config`` key-value file, ``DPFAIR_<KEY>`` environment variables, then
command-line flags. Keys are the :class:`ExperimentConfig` field names
(``clip_norm``, ``epsilon_grid``...). Lists are comma-separated.

Exit codes: 0 success, 1 some cells failed, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import fields
from pathlib import Path

from .data import SplitSpec, group_statistics, load_adult
from .experiment import ConfigError, ExperimentConfig, sweep
from .privacy import CalibrationError, calibrate_noise_multiplier
from .report import ReportError, build_report, emit, read_records

ENV_PREFIX = "DPFAIR_"
EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

_TUPLE_FIELDS = {"models": str, "epsilon_grid": float, "delta_grid": float, "seeds": int}


def _coerce(key: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if key not in types:
        raise ConfigError(f"unknown setting {key!r}")
    if key in _TUPLE_FIELDS:
        return tuple(_TUPLE_FIELDS[key](v.strip()) for v in str(raw).split(",") if v.strip())
    default = getattr(ExperimentConfig(), key)
    try:
        return type(default)(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path: str | Path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    settings = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        settings[key.replace("-", "_")] = _coerce(key.replace("-", "_"), value)
    return settings


def env_settings(environ=os.environ) -> dict:
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX) :].lower()
            out[key] = _coerce(key, value)
    return out


def resolve_config(args: argparse.Namespace, environ=os.environ) -> ExperimentConfig:
    settings = {}
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    settings.update(env_settings(environ))
    flag_map = {
        "model": "models",
        "epsilon": "epsilon_grid",
        "delta": "delta_grid",
        "clip_norm": "clip_norm",
        "rd_bound": "rd_bound",
        "data_dir": "data_dir",
        "out": "out_dir",
        "epochs": "epochs",
        "workers": "workers",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = _coerce(key, value) if isinstance(value, str) and key in _TUPLE_FIELDS else value
    n_seeds = getattr(args, "seeds", None)
    base = getattr(args, "base_seed", None)
    if n_seeds is not None or base is not None:
        n_seeds = n_seeds if n_seeds is not None else len(settings.get("seeds", range(10)))
        base = base if base is not None else 0
        settings["seeds"] = tuple(range(base, base + n_seeds))
    return ExperimentConfig(**settings)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--data-dir", help="directory holding adult.data and adult.test")
    p.add_argument("--out", help="output directory")


def _add_experiment(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="comma-separated subset of snn,fnn,dpnn,dpfnn")
    p.add_argument("--epsilon", help="comma-separated epsilon values")
    p.add_argument("--delta", help="comma-separated delta values")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--base-seed", type=int, help="first seed")
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--rd-bound", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpfair", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="encode the Adult files and print group statistics")
    _add_common(p)

    p = sub.add_parser("calibrate", help="noise multiplier for a target (epsilon, delta)")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--dataset-size", type=int, required=True)
    p.add_argument("--epochs", type=int, default=20)

    for name, help_ in (
        ("run", "run the configured cells and write records.csv"),
        ("sweep", "run every cell and write records, summary and regression"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        _add_experiment(p)

    p = sub.add_parser("report", help="rebuild summary.md and regression.txt from records.csv")
    _add_common(p)
    p.add_argument("--records", help="records.csv (default: <out>/records.csv)")
    return parser


def _cmd_prepare(args, config: ExperimentConfig) -> int:
    ds = load_adult(config.data_dir, SplitSpec(shuffle_seed=config.split_seed))
    out = Path(config.out_dir)
    csv_path, schema_path = ds.to_csv(out / "adult_processed.csv")
    stats = group_statistics(ds)
    print(f"rows={len(ds)}")
    for split in ("train", "validation", "test"):
        print(f"{split}_rows={int((ds.split == split).sum())}")
    for k, v in vars(stats).items():
        print(f"{k}={v:.4f}")
    print(f"written={csv_path},{schema_path}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    if args.dataset_size < 1 or args.batch_size < 1 or args.epochs < 1:
        raise ConfigError("dataset-size, batch-size and epochs must be >= 1")
    q = args.batch_size / args.dataset_size
    if q > 1:
        raise ConfigError("batch-size larger than dataset-size")
    steps = args.epochs * math.ceil(args.dataset_size / args.batch_size)
    sigma, eps = calibrate_noise_multiplier(args.epsilon, args.delta, q, steps)
    print(f"noise_multiplier={sigma:.6f}")
    print(f"achieved_epsilon={eps:.6f}")
    return EXIT_OK


def _cmd_run(args, config: ExperimentConfig, full_report: bool) -> int:
    records = sweep(config)
    out = Path(config.out_dir)
    if full_report:
        emit(build_report(records), out)
    else:
        from .report import write_records

        out.mkdir(parents=True, exist_ok=True)
        write_records(records, out / "records.csv")
    failed = [r for r in records if not r.ok]
    print(f"records={len(records)} failed={len(failed)} out={out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _cmd_report(args, config: ExperimentConfig) -> int:
    path = Path(args.records) if args.records else Path(config.out_dir) / "records.csv"
    records = read_records(path)
    report = build_report(records)
    emit(report, config.out_dir)
    print(f"cells={len(report.cells)} failed={len(report.failures)} out={config.out_dir}")
    return EXIT_PARTIAL if report.failures else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        config = resolve_config(args)
        if args.command == "prepare-data":
            return _cmd_prepare(args, config)
        if args.command in ("run", "sweep"):
            return _cmd_run(args, config, full_report=args.command == "sweep")
        if args.command == "report":
            return _cmd_report(args, config)
    except (ConfigError, CalibrationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
