"""Command-line interface.

Subcommands:
  simulate      run a preset sweep (simulation + analytic companion) to CSV
  bounds        evaluate only the analytic companion of a preset to CSV
  optimize-pzf  grid-search the cancellation split maximizing cellular SE
  selftest      run the quick property suite

Exit codes: 0 success, 1 invalid configuration, 2 runtime or numerical
failure.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .analytic import InfeasibleBoundError, QuadratureError
from .pzf import InfeasiblePzfError


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", required=True, help="preset name, e.g. fig2")
    p.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="flat config override, e.g. --override pzf.m_d=8",
    )
    p.add_argument("--config", help="flat key=value config file applied before overrides")
    p.add_argument("--seed", type=int, default=1, help="master seed (u64)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--workers", type=int, default=1, help="parallel drop workers")


def _build_config(args) -> harness.ExperimentConfig:
    cfg = harness.preset(args.preset)
    overrides: dict[str, str] = {}
    if args.config:
        overrides.update(harness.parse_config_file(args.config))
    for item in args.override:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    cfg = harness.apply_overrides(cfg, overrides)
    cfg = harness.apply_overrides(cfg, {"run.master_seed": str(args.seed)})
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="d2dmimo",
        description="D2D-underlaid massive MIMO uplink spectral-efficiency experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("simulate", "bounds"):
        _add_common(sub.add_parser(name))

    opt = sub.add_parser("optimize-pzf")
    _add_common(opt)
    opt.add_argument("--method", choices=("sim", "bound"), default="sim")

    sub.add_parser("selftest")

    args = parser.parse_args(argv)

    if args.command == "selftest":
        from .selftest import run_selftest

        try:
            return 0 if run_selftest() else 2
        except Exception as exc:  # pragma: no cover - defensive
            print(f"selftest crashed: {exc}", file=sys.stderr)
            return 2

    try:
        cfg = _build_config(args)
    except (ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "simulate":
            results = harness.run_experiment(cfg, workers=args.workers)
        elif args.command == "bounds":
            results = harness.run_experiment(cfg, workers=args.workers, bounds_only=True)
        else:
            best, results = harness.optimize_pzf(cfg, method=args.method, workers=args.workers)
            print(f"best cancellation split: m_c={best[0]} m_d={best[1]}")
        harness.emit_csv(results, args.out)
    except (InfeasiblePzfError, InfeasibleBoundError, QuadratureError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 2

    for r in results:
        if r.error is not None:
            print(f"sweep={harness.format_sweep_value(r.sweep_value)}: {r.error}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
