"""Command line driver: simulate / convergence / monotone.

The GMCFLOW_THREADS environment variable caps the BLAS thread count; it
is applied before the numerical modules are imported, so the CLI imports
them lazily.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_env() -> None:
    n = os.environ.get("GMCFLOW_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, n)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmcflow",
        description="Surface finite element solver for generalized mean "
                    "curvature flows v = -V(H) nu of closed surfaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="time integration with VTK/CSV output")
    p_sim.add_argument("config")

    p_conv = sub.add_parser("convergence", help="EOC study on the sphere")
    p_conv.add_argument("config")
    p_conv.add_argument("--mode", choices=("space", "time"), required=True)
    p_conv.add_argument("--levels", type=int, default=4)

    p_mono = sub.add_parser("monotone", help="simulate plus monotonicity verdicts")
    p_mono.add_argument("config")
    return parser


def main(argv=None) -> int:
    _apply_thread_env()
    args = make_parser().parse_args(argv)

    from .config import ConfigError, parse_config
    from .mesh import MeshError
    from .stepping import SolverError

    try:
        cfg = parse_config(args.config)
        if args.command == "simulate":
            from .run import simulate

            result = simulate(cfg)
            print(f"completed {result.steps_taken} steps; "
                  f"series: {os.path.join(cfg.output_dir, 'series.csv')}")
        elif args.command == "convergence":
            from .run import convergence

            table = convergence(cfg, args.mode, args.levels)
            print(table.format())
            os.makedirs(cfg.output_dir, exist_ok=True)
            out = os.path.join(cfg.output_dir, f"convergence_{args.mode}.csv")
            table.to_csv(out)
            print(f"written: {out}")
        else:
            from .run import monotone

            result, verdicts = monotone(cfg)
            print(f"completed {result.steps_taken} steps")
            for v in verdicts:
                status = "ok" if v.passed else "VIOLATED"
                print(f"{v.quantity}: {v.direction} {status} "
                      f"(max violation {v.max_violation:.3e})")
    except (ConfigError, MeshError, SolverError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
