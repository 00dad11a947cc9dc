"""Command-line entry point: ``girsanov-diffusion {forward,reverse,kl,bound,all}``."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from . import experiments
from .config import ConfigError, ExperimentConfig, load
from .sde import NumericError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="girsanov-diffusion",
        description="Simulate OU diffusions, discrete Girsanov KL and TV-bound experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--svg", dest="svg", action="store_true", default=None, help="emit SVG plots")
    common.add_argument("--no-svg", dest="svg", action="store_false", help="CSV only")
    common.add_argument("--paths", type=int, help="number of simulated paths")
    common.add_argument("--steps", type=int, help="number of time steps N")
    common.add_argument("--horizon", type=float, help="time horizon T")
    common.add_argument("--eps", type=float, help="score error eps")
    common.add_argument("--workers", type=int, help="simulation threads (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("forward", parents=[common], help="noise the data to time T")
    rev = sub.add_parser("reverse", parents=[common], help="denoise with exact and perturbed scores")
    rev.add_argument("--init", choices=["true_qT", "standard_gaussian"], default="true_qT")
    sub.add_parser("kl", parents=[common], help="cumulative path KL between reverse chains")
    bound = sub.add_parser("bound", parents=[common], help="measured TV against the composite bound")
    bound.add_argument("--T-grid", type=lambda s: [float(v) for v in s.split(",")],
                       help="comma-separated horizons (default from config)")
    bound.add_argument("--score", choices=["perturbed", "exact"], default="perturbed")
    sub.add_parser("all", parents=[common], help="run every stage in order")
    return parser


def make_config(args) -> ExperimentConfig:
    config = load(args.config) if args.config else ExperimentConfig()
    overrides = {"master_seed": args.seed, "out_dir": args.out_dir, "emit_svg": args.svg,
                 "n_paths": args.paths, "N": args.steps, "T": args.horizon,
                 "eps_score": args.eps, "workers": args.workers}
    changes = {k: v for k, v in overrides.items() if v is not None}
    return config.replace(**changes) if changes else config


def run(args) -> experiments.FigureBundle:
    config = make_config(args)
    if args.command == "forward":
        return experiments.run_forward(config)
    if args.command == "reverse":
        return experiments.run_reverse(config, init_kind=args.init)
    if args.command == "kl":
        return experiments.run_kl(config)
    if args.command == "bound":
        return experiments.run_bound_report(config, args.T_grid, score_kind=args.score)
    return experiments.run_all(config)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, experiments.StageError) and exc.__cause__ is not None:
        exc = exc.__cause__
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_RUNTIME


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        bundle = run(args)
    except (ConfigError, NumericError, ArithmeticError, ValueError, OSError,
            experiments.StageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    for name, path in sorted(bundle.tables.items()):
        print(f"{name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
