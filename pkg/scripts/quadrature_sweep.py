#!/usr/bin/env python3
"""
Quadrature-order sweep of the error-equation residual.

Solves a manufactured problem once, then re-evaluates the identity residual
for each face and cell quadrature order. The table shows where the residual
stops improving, which is the tolerance the identity check can promise.

Example:
    python scripts/quadrature_sweep.py --family cube --n 2 --k 1 --orders 4,6,8,10,12
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from vem.analysis import quadrature_sweep, solve_problem  # noqa: E402
from vem.generators import build_family_mesh  # noqa: E402
from vem.mesh import load_mesh  # noqa: E402
from vem.models import MeshFamily, MeshFamilyConfig, StabilizationVariant  # noqa: E402
from vem.problems import BUILTIN_PROBLEMS, get_problem  # noqa: E402


def die(msg: str, code: int = 2) -> None:
    print(f"ERROR: {msg}", file=sys.stderr)
    sys.exit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description="Identity residual against quadrature order")
    parser.add_argument("--mesh", type=Path, default=None, help="Mesh file (overrides --family)")
    parser.add_argument("--family", choices=[f.value for f in MeshFamily], default="cube")
    parser.add_argument("--n", type=int, default=2)
    parser.add_argument("--eps", type=float, default=0.1, help="Slit aperture")
    parser.add_argument("--k", type=int, default=1)
    parser.add_argument("--problem", choices=sorted(BUILTIN_PROBLEMS), default="sinsinsin")
    parser.add_argument("--stab", choices=[v.value for v in StabilizationVariant], default="new")
    parser.add_argument("--orders", default="4,6,8,10,12,14", help="Comma-separated quadrature orders")
    parser.add_argument("--trials", type=int, default=10)
    args = parser.parse_args()

    try:
        orders = [int(o) for o in args.orders.split(",")]
    except ValueError:
        die(f"--orders must be comma-separated integers, got {args.orders!r}")
    if args.n < 1 or not 1 <= args.k <= 3:
        die("--n must be positive and --k in 1..3")

    logging.basicConfig(level=logging.WARNING)
    if args.mesh is not None:
        mesh = load_mesh(args.mesh)
    else:
        family = MeshFamilyConfig(family=args.family, levels=[args.n], eps_rule="fixed", eps=args.eps)
        mesh = build_family_mesh(family, args.n)

    problem = get_problem(args.problem)
    outcome = solve_problem(mesh, args.k, problem, StabilizationVariant(args.stab))
    reports = quadrature_sweep(outcome.system, outcome.reduced, problem, outcome.u_h, outcome.u_I,
                               orders, trials=args.trials)
    print(f"{'order':>6s}  {'relative':>12s}  {'literal':>12s}  {'|L-R|':>12s}")
    for order, report in reports.items():
        print(f"{order:>6d}  {report.max_relative_residual:12.4e}  "
              f"{report.max_literal_residual:12.4e}  {report.max_residual:12.4e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
