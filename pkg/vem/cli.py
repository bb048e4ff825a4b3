"""
Command-line entry point.

Subcommands: gen-mesh, solve, verify-identity and study. Results are printed
to stdout as one ``key=value`` summary line; logs go to stderr.

Exit codes: 0 success, 1 unexpected failure, 2 usage or invalid input,
3 solver failure, 4 identity residual above threshold, 5 study rate below
0.9 k.
"""

import argparse
import logging
import sys
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from vem import __version__
from vem.analysis import IDENTITY_QUAD_EXTRA, solve_problem, verify_error_equation
from vem.assembly import dump_matrix
from vem.config import get_settings, read_config_file
from vem.generators import GeneratorError, build_family_mesh
from vem.geometry import GeometryError
from vem.gates import get_acceptance_gate
from vem.mesh import MeshParseError, MeshValidationError, PolyMesh, load_mesh, save_mesh
from vem.models import EpsRule, MeshFamily, RunConfig, StabilizationVariant
from vem.problems import BUILTIN_PROBLEMS, get_problem
from vem.solver import SolverError
from vem.study import ConvergenceStudy, StudyError, write_reports

logger = logging.getLogger(__name__)


class ExitCode(IntEnum):
    OK = 0
    FAILURE = 1
    USAGE = 2
    SOLVER = 3
    IDENTITY = 4
    RATE = 5


USAGE_ERRORS = (ValidationError, MeshParseError, MeshValidationError, GeneratorError, GeometryError,
                FileNotFoundError, ValueError)

# Settings-backed defaults for flags left unset
SETTINGS_DEFAULTS = {
    "c_eps": "c_eps",
    "tol": "solver_tol",
    "max_iter": "max_iter",
    "threads": "threads",
    "output_dir": "output_dir",
}


class UsageError(Exception):
    """Raised for command-line arguments that cannot be interpreted."""
    pass


def _levels(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers, got {text!r}")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=argparse.SUPPRESS,
                        help="key=value file with defaults for any long flag")
    parser.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="debug logging")


def _mesh_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mesh", dest="mesh_path", type=Path, help="mesh file")
    parser.add_argument("--family", choices=[f.value for f in MeshFamily], help="generated mesh family")
    parser.add_argument("--n", type=int, help="subdivisions per axis")
    parser.add_argument("--eps", type=float, help="slit aperture")
    parser.add_argument("--magnitude", type=float, help="vertex perturbation relative to 1/n")
    parser.add_argument("--seed", type=int, help="random seed")


def _discretization(parser: argparse.ArgumentParser, default_problem: Optional[str] = None) -> None:
    parser.add_argument("--k", type=int, help="polynomial order (1..3)")
    parser.add_argument("--problem", choices=sorted(BUILTIN_PROBLEMS), default=default_problem,
                        help="manufactured problem")
    parser.add_argument("--stab", dest="variant", choices=[v.value for v in StabilizationVariant],
                        help="stabilization variant")
    parser.add_argument("--c-eps", dest="c_eps", type=float, help="eps_F = c_eps * rho_F")
    parser.add_argument("--tol", type=float, help="relative CG tolerance")
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="CG iteration limit")
    parser.add_argument("--quad-order", dest="quad_order", type=int, help="quadrature order override")
    parser.add_argument("--threads", type=int, help="local build threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vem", description="Order-k virtual elements for Poisson in 3D")
    parser.add_argument("--config", type=Path, default=None, help="key=value file with defaults for any long flag")
    parser.add_argument("--verbose", action="store_true", default=False, help="debug logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-mesh", help="write a generated mesh")
    gen.add_argument("family", choices=[f.value for f in MeshFamily])
    gen.add_argument("--n", type=int, help="subdivisions per axis")
    gen.add_argument("--eps", type=float, help="slit aperture")
    gen.add_argument("--eps-rule", dest="eps_rule", choices=[r.value for r in EpsRule])
    gen.add_argument("--eps-scale", dest="eps_scale", type=float)
    gen.add_argument("--magnitude", type=float, help="vertex perturbation relative to 1/n")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--output", type=Path, help="mesh file to write")
    gen.add_argument("--output-dir", dest="output_dir", type=Path)
    _common(gen)

    solve = sub.add_parser("solve", help="solve a manufactured problem")
    _mesh_source(solve)
    _discretization(solve)
    solve.add_argument("--dump-matrix", dest="dump_matrix", type=Path, help="Matrix Market output")
    solve.add_argument("--output-dir", dest="output_dir", type=Path)
    _common(solve)

    verify = sub.add_parser("verify-identity", help="check the error equation on random test vectors")
    _mesh_source(verify)
    _discretization(verify)
    verify.add_argument("--trials", type=int)
    verify.add_argument("--threshold", type=float)
    _common(verify)

    study = sub.add_parser("study", help="convergence study over a mesh family")
    study.add_argument("--family", choices=[f.value for f in MeshFamily])
    study.add_argument("--levels", type=_levels, help="comma-separated subdivisions, e.g. 2,4,8")
    study.add_argument("--eps-rule", dest="eps_rule", choices=[r.value for r in EpsRule])
    study.add_argument("--eps", type=float)
    study.add_argument("--eps-scale", dest="eps_scale", type=float)
    study.add_argument("--magnitude", type=float)
    study.add_argument("--seed", type=int)
    _discretization(study, default_problem="sinsinsin")
    study.add_argument("--output-dir", dest="output_dir", type=Path)
    _common(study)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: List[str], args: argparse.Namespace) -> argparse.Namespace:
    """Re-parse with the config file entries installed as subcommand defaults."""
    entries = read_config_file(args.config)
    known = set(vars(args)) - {"command", "config"}
    entries = {("variant" if key == "stab" else "mesh_path" if key == "mesh" else key): value
               for key, value in entries.items()}
    unknown = sorted(set(entries) - known)
    if unknown:
        raise UsageError(f"Unknown keys in {args.config}: {', '.join(unknown)}")
    verbose = entries.pop("verbose", None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparsers.choices[args.command].set_defaults(**entries)
    reparsed = parser.parse_args(argv)
    if verbose is not None and verbose.lower() in ("1", "true", "yes", "on"):
        reparsed.verbose = True
    return reparsed


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """RunConfig from parsed arguments, with unset flags taken from settings."""
    settings = get_settings()
    values: Dict[str, Any] = {
        key: value for key, value in vars(args).items()
        if key not in ("config", "verbose") and value is not None
    }
    for key, name in SETTINGS_DEFAULTS.items():
        values.setdefault(key, getattr(settings, name))
    return RunConfig(**values)


def load_run_mesh(config: RunConfig) -> PolyMesh:
    """Mesh from file, or from the generator named by the run."""
    if config.mesh_path is not None:
        return load_mesh(config.mesh_path)
    mesh = build_family_mesh(config.family_config(), config.n)
    mesh.validate()
    return mesh


def _mesh_stem(config: RunConfig) -> str:
    if config.mesh_path is not None:
        return config.mesh_path.stem
    return f"{config.family.value}_n{config.n}"


def _summary(**fields) -> str:
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            value = f"{value:.6e}"
        parts.append(f"{key}={value}")
    return " ".join(parts)


def cmd_gen_mesh(config: RunConfig) -> ExitCode:
    mesh = build_family_mesh(config.family_config(), config.n)
    report = mesh.validate()
    output = config.output or Path(config.output_dir) / f"{_mesh_stem(config)}.pm"
    save_mesh(mesh, output)
    print(_summary(mesh=output, vertices=report.num_vertices, edges=report.num_edges,
                   faces=report.num_faces, cells=report.num_cells,
                   boundary_faces=report.num_boundary_faces, max_faces_per_cell=report.max_faces_per_cell,
                   min_rho_F=report.min_rho_F, min_rho_K=report.min_rho_K, hash=mesh.content_hash()))
    return ExitCode.OK


def cmd_solve(config: RunConfig) -> ExitCode:
    mesh = load_run_mesh(config)
    problem = get_problem(config.problem)
    outcome = solve_problem(mesh, config.k, problem, config.variant, c_eps=config.c_eps, tol=config.tol,
                            max_iter=config.max_iter, quad_order=config.quad_order, threads=config.threads)
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    solution = output_dir / f"{_mesh_stem(config)}_k{config.k}_{config.problem}_solution.txt"
    np.savetxt(solution, outcome.u_h.values, fmt="%.17g")
    if config.dump_matrix is not None:
        dump_matrix(outcome.system, config.dump_matrix)
    stats = outcome.system.stats
    print(_summary(k=config.k, problem=config.problem, variant=config.variant.value,
                   ndof=outcome.system.ndof, energy_err=outcome.energy_err, h1_err=outcome.h1_err,
                   l2_err=outcome.l2_err, stab_seminorm=outcome.stab_seminorm,
                   cg_iters=outcome.cg_iters, residual=stats.residual if stats else 0.0,
                   solution=solution))
    return ExitCode.OK


def cmd_verify_identity(config: RunConfig) -> ExitCode:
    mesh = load_run_mesh(config)
    problem = get_problem(config.problem)
    # load, interpolant and identity share one quadrature order
    order = config.quad_order or 2 * config.k + IDENTITY_QUAD_EXTRA
    outcome = solve_problem(mesh, config.k, problem, config.variant, c_eps=config.c_eps, tol=config.tol,
                            max_iter=config.max_iter, quad_order=order, threads=config.threads)
    report = verify_error_equation(outcome.system, outcome.reduced, problem, outcome.u_h, outcome.u_I,
                                   trials=config.trials, seed=config.seed, order=order)
    decision = get_acceptance_gate().evaluate_identity(report, config.threshold)
    print(_summary(max_relative_residual=report.max_relative_residual,
                   max_literal_residual=report.max_literal_residual,
                   max_residual=report.max_residual, trials=report.trials,
                   quad_order=report.quad_order, threshold=config.threshold, decision=decision.decision))
    return ExitCode.OK if decision.decision == "pass" else ExitCode.IDENTITY


def cmd_study(config: RunConfig) -> ExitCode:
    study = ConvergenceStudy(c_eps=config.c_eps, tol=config.tol, max_iter=config.max_iter,
                             quad_order=config.quad_order, threads=config.threads)
    report = study.run(config.family_config(), config.k, config.problem, config.variant)
    paths = write_reports(report, config.output_dir)
    decision = get_acceptance_gate().evaluate_rates(report)
    rates = {f"{name}_rate": fit.rate for name, fit in report.rates.items() if fit.rate is not None}
    energy = report.rates["energy_err"]
    print(_summary(**rates, energy_r2=energy.r2 if energy.r2 is not None else "---",
                   within_window=energy.within_window, decision=decision.decision, csv=paths["csv"]))
    return ExitCode.RATE if decision.decision == "fail" else ExitCode.OK


COMMANDS = {
    "gen-mesh": cmd_gen_mesh,
    "solve": cmd_solve,
    "verify-identity": cmd_verify_identity,
    "study": cmd_study,
}


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_settings().log_level)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ExitCode.OK if e.code == 0 else ExitCode.USAGE

    try:
        if getattr(args, "config", None) is not None:
            args = _apply_config_file(parser, argv, args)
        _configure_logging(bool(getattr(args, "verbose", False)))
        config = build_run_config(args)
    except SystemExit as e:
        return ExitCode.OK if e.code == 0 else ExitCode.USAGE
    except (UsageError, ValidationError, FileNotFoundError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return ExitCode.USAGE

    try:
        return COMMANDS[config.command](config)
    except SolverError as e:
        logger.error(f"Solver failed: {e}")
        print(_summary(error="solver", residual=e.residual, iterations=e.iterations))
        return ExitCode.SOLVER
    except StudyError as e:
        if isinstance(e.__cause__, SolverError):
            logger.error(f"Study level {e.level} solver failure: {e}")
            print(_summary(error="solver", level=e.level, residual=e.__cause__.residual))
            return ExitCode.SOLVER
        logger.error(f"Study failed: {e}")
        if e.__cause__ is None or isinstance(e.__cause__, USAGE_ERRORS):
            print(f"ERROR: {e}", file=sys.stderr)
            return ExitCode.USAGE
        return ExitCode.FAILURE
    except USAGE_ERRORS as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return ExitCode.USAGE
    except Exception as e:
        logger.exception(f"Command {config.command} failed: {e}")
        return ExitCode.FAILURE


if __name__ == "__main__":
    sys.exit(main())
