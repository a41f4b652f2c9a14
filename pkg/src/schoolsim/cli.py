"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import ConfigError, ExperimentConfig, load_config, preset, run
from .model import InvalidParams, SchoolSimError

# CLI subcommand -> config kind; sweeps take their flavor as a sub-argument.
_COMMAND_KINDS = {
    "simulate": "simulate",
    "bootstrap": "bootstrap",
    "classify": "pattern",
    "cohesion": "cohesion",
}
_SWEEP_KINDS = {
    "exponent": "sweep_exponent",
    "speed": "sweep_speed",
    "rcrit": "sweep_rcrit",
}


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", metavar="PATH",
                        help="JSON config file (omit to use the built-in preset)")
    parser.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (default: the config's output_path)")
    parser.add_argument("--workers", type=int, default=1, metavar="N",
                        help="worker threads for grid points and trials")
    parser.add_argument("--full", action="store_true",
                        help="use the fine full-resolution preset grids (slow)")
    parser.add_argument("--seed", type=int, default=None, metavar="S",
                        help="override the seed list with a single seed")
    parser.add_argument("--dt", type=float, default=None, metavar="X",
                        help="override the integration step")
    parser.add_argument("--csv", action="store_true",
                        help="also export trajectories as flat CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schoolsim",
        description="Stochastic fish-school simulator: obstacle-avoidance "
                    "patterns and critical-noise cohesiveness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate one free-space trial and summarize it"),
        ("bootstrap", "relax a random cloud into a stationary school"),
        ("classify", "run one obstacle encounter and label its pattern"),
        ("cohesion", "scan noise magnitudes for the critical value"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    p = sub.add_parser("sweep", help="classify encounters over a parameter grid")
    p.add_argument("flavor", choices=sorted(_SWEEP_KINDS))
    _add_common(p)
    return parser


def _resolve_config(args) -> ExperimentConfig:
    kind = _SWEEP_KINDS[args.flavor] if args.command == "sweep" else _COMMAND_KINDS[args.command]
    if args.config is not None:
        cfg = load_config(args.config)
        if cfg.kind != kind:
            raise ConfigError(
                f"config kind '{cfg.kind}' does not match command '{kind}'"
            )
    else:
        cfg = preset(kind, full=args.full)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.dt is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, dt=args.dt))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        out_dir = args.out if args.out is not None else cfg.output_path
        payload = run(cfg, out_dir, workers=args.workers, csv_export=args.csv)
    except (ConfigError, InvalidParams) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SchoolSimError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    for key in ("label", "sigma_bar", "schooling", "diameter"):
        if key in payload:
            print(f"{key}: {payload[key]}")
    if "report" in payload and "transition_boundaries" in payload.get("report", {}):
        print(f"transition_boundaries: {payload['report']['transition_boundaries']}")
    print(f"report: {out_dir}/report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
