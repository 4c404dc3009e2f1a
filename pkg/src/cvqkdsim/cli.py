"""Command-line interface.

Verbs: ``run``, ``sweep``, ``ab-suppression``, ``calibrate``. The config
argument is a TOML file path or a bundled preset name. Exit codes: 0 ok,
2 configuration error, 3 synchronisation/pilot failure, 4 calibration
invalid.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

from . import configio
from . import experiment as xp
from .errors import CalibrationError, ConfigError, PilotLostError, SyncFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SYNC = 3
EXIT_CALIBRATION = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="TOML config path or preset name")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out-dir", type=Path, default=None, help="artifact directory")
    parser.add_argument(
        "--format",
        choices=["csv", "json", "both"],
        default="both",
        help="report format(s) to write",
    )
    parser.add_argument("--blocks", type=int, default=None, help="override data block count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvqkdsim",
        description="Pilot-assisted CV-QKD link simulator",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run calibration and data blocks, emit a report")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run once per value of a config axis")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, help="config field to sweep")
    p_sweep.add_argument(
        "--values", required=True, help="comma-separated numeric values (may be empty)"
    )

    p_ab = sub.add_parser(
        "ab-suppression", help="paired-seed comparison across carrier suppressions"
    )
    _add_common(p_ab)
    p_ab.add_argument(
        "--values", required=True, help="comma-separated suppression values in dB"
    )

    p_cal = sub.add_parser("calibrate", help="calibration-only run (N0 and xi_det)")
    _add_common(p_cal)

    p_presets = sub.add_parser("presets", help="list bundled presets")
    return parser


def _parse_values(text: str) -> list[float]:
    items = [s.strip() for s in text.split(",")]
    return [float(s) for s in items if s]


def _load(args) -> xp.ExperimentConfig:
    cfg = configio.resolve_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "blocks", None) is not None:
        cfg = dataclasses.replace(cfg, blocks=args.blocks)
    return cfg


def _formats(fmt: str) -> tuple:
    return ("json", "csv") if fmt == "both" else (fmt,)


def _print_report(report) -> None:
    label = report.label or "run"
    print(f"# {label}: {report.blocks} blocks x {report.symbols_per_block} symbols")
    for policy in ("averaged", "worst_case"):
        res = report.result(policy)
        parts = [f"N0={res.n0:.5f}", f"xi_det={res.xi_det:.4f}"]
        if res.xi_tot == res.xi_tot:  # not NaN
            parts += [
                f"xi_tot={res.xi_tot:.4f}",
                f"xi_tot-xi_det={res.xi_minus_det:.4f}",
                f"SNR={res.snr_empirical:.3f}",
                f"<n_B>={res.n_b:.3f}",
            ]
            if res.t_hat is not None:
                parts.append(f"T={res.t_hat:.3f}")
        print(f"  {policy:10s} " + "  ".join(parts))


def _cmd_run(args) -> int:
    cfg = _load(args)
    result = xp.run_experiment(cfg, out_dir=args.out_dir, report_formats=_formats(args.format))
    _print_report(result.report)
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = dataclasses.replace(_load(args), blocks=0)
    result = xp.run_experiment(cfg, out_dir=args.out_dir, report_formats=_formats(args.format))
    _print_report(result.report)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    values = _parse_values(args.values)
    reports = xp.run_sweep(cfg, args.axis, values)
    rows = xp.sweep_csv_rows(args.axis, values, reports)
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        with (args.out_dir / "sweep.csv").open("w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    writer = csv.writer(sys.stdout)
    writer.writerows(rows)
    return EXIT_OK


def _cmd_ab(args) -> int:
    cfg = _load(args)
    values = _parse_values(args.values)
    pairs = xp.run_ab_suppression(cfg, values)
    rows = [["carrier_suppression_db", "policy", "xi_tot", "xi_minus_det"]]
    for supp, report in pairs:
        for policy in ("averaged", "worst_case"):
            res = report.result(policy)
            rows.append(
                [f"{supp:.17g}", policy, f"{res.xi_tot:.17g}", f"{res.xi_minus_det:.17g}"]
            )
        _print_report(report)
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        with (args.out_dir / "ab_suppression.csv").open("w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    return EXIT_OK


def _cmd_presets(_args) -> int:
    for name in configio.list_presets():
        print(name)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "ab-suppression": _cmd_ab,
        "calibrate": _cmd_calibrate,
        "presets": _cmd_presets,
    }
    try:
        return handlers[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SyncFailure, PilotLostError) as exc:
        print(f"synchronisation error: {exc}", file=sys.stderr)
        return EXIT_SYNC
    except CalibrationError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
