"""
Convergence studies over refinement families.

Each level generates its mesh, solves the manufactured problem and records
the energy, broken H1 and L2 errors with mesh statistics. Rates are least
squares slopes of log(error) against log(h_max).
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from vem.analysis import solve_problem
from vem.generators import build_family_mesh
from vem.models import ErrorReport, LevelRecord, MeshFamily, MeshFamilyConfig, RateFit, StabilizationVariant
from vem.problems import get_problem

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["level", "h_max", "ndof", "energy_err", "h1_err", "l2_err", "min_rho_F", "min_rho_K", "cg_iters"]
ERROR_COLUMNS = ("energy_err", "h1_err", "l2_err")
R2_THRESHOLD = 0.98
WINDOW = (0.9, 1.3)


class StudyError(Exception):
    """Raised when one level of a study fails."""

    def __init__(self, message: str, level: int):
        self.level = level
        super().__init__(f"level {level}: {message}")


def fit_rate(h: Sequence[float], errors: Sequence[float], expected: Optional[float] = None) -> RateFit:
    """
    Least-squares rate with R^2 and the slope of the last two levels.

    Errors at or below zero carry no rate; the fit is empty then.
    """
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(h) < 2 or np.any(errors <= 0.0):
        return RateFit(expected=expected)
    x, y = np.log(h), np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    last_pair = float((y[-2] - y[-1]) / (x[-2] - x[-1]))
    within = None
    if expected is not None:
        within = bool(WINDOW[0] * expected <= slope <= WINDOW[1] * expected)
    return RateFit(rate=float(slope), r2=r2, last_pair=last_pair, expected=expected, within_window=within)


class ConvergenceStudy:
    """Runs a manufactured problem across the levels of a mesh family."""

    def __init__(self, c_eps: Optional[float] = None, tol: Optional[float] = None,
                 max_iter: Optional[int] = None, quad_order: Optional[int] = None,
                 threads: Optional[int] = None):
        self.c_eps = c_eps
        self.tol = tol
        self.max_iter = max_iter
        self.quad_order = quad_order
        self.threads = threads

    def run_level(self, family: MeshFamilyConfig, index: int, n: int, k: int,
                  problem_name: str, variant: StabilizationVariant) -> LevelRecord:
        """Generate, solve and measure one level."""
        problem = get_problem(problem_name)
        mesh = build_family_mesh(family, n)
        report = mesh.validate()
        outcome = solve_problem(mesh, k, problem, variant, c_eps=self.c_eps, tol=self.tol,
                                max_iter=self.max_iter, quad_order=self.quad_order, threads=self.threads)
        return LevelRecord(
            level=index,
            n=n,
            h_max=mesh.h_max,
            ndof=outcome.system.ndof,
            energy_err=outcome.energy_err,
            h1_err=outcome.h1_err,
            l2_err=outcome.l2_err,
            min_rho_F=report.min_rho_F,
            min_rho_K=report.min_rho_K,
            cg_iters=outcome.cg_iters,
            stab_seminorm=outcome.stab_seminorm,
            eps=family.aperture(n) if family.family == MeshFamily.SLIT else None,
            max_faces_per_cell=report.max_faces_per_cell,
        )

    def run(self, family: MeshFamilyConfig, k: int, problem: str = "sinsinsin",
            variant: StabilizationVariant = StabilizationVariant.NEW) -> ErrorReport:
        """
        Run every level of the family and fit rates.

        Args:
            family: Mesh family with at least three levels
            k: Polynomial order
            problem: Builtin manufactured problem name
            variant: Stabilization variant

        Returns:
            ErrorReport with per-level records and fitted rates
        """
        if len(family.levels) < 3:
            raise StudyError("a study needs at least 3 refinement levels", level=len(family.levels))
        records: List[LevelRecord] = []
        for index, n in enumerate(family.levels):
            try:
                record = self.run_level(family, index, n, k, problem, variant)
            except Exception as e:
                logger.error(f"Study level {index} (n={n}) failed: {e}")
                raise StudyError(str(e), level=index) from e
            logger.info(f"Level {index} (n={n}): h={record.h_max:.4f}, ndof={record.ndof}, "
                        f"energy={record.energy_err:.4e}, min rho_F={record.min_rho_F:.4f}")
            records.append(record)

        h = [r.h_max for r in records]
        expected = {"energy_err": float(k), "h1_err": float(k), "l2_err": float(k + 1)}
        rates: Dict[str, RateFit] = {
            name: fit_rate(h, [getattr(r, name) for r in records], expected[name])
            for name in ERROR_COLUMNS
        }
        energy = rates["energy_err"]
        non_asymptotic = energy.r2 is not None and energy.r2 < R2_THRESHOLD
        if non_asymptotic:
            logger.warning(f"Energy rate fit R^2={energy.r2:.4f} below {R2_THRESHOLD}; "
                           f"family {family.family.value} flagged non-asymptotic")
        return ErrorReport(family=family, k=k, problem=problem, variant=variant,
                           records=records, rates=rates, non_asymptotic=non_asymptotic)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10e}"
    return str(value)


def _rate(value: Optional[float]) -> str:
    return "---" if value is None else f"{value:.3f}"


def write_csv(report: ErrorReport, path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for record in report.records:
            writer.writerow([_fmt(getattr(record, column)) for column in CSV_COLUMNS])
    return path


def format_markdown(report: ErrorReport) -> str:
    """Per-level table followed by the fitted rates."""
    lines = [
        f"# Convergence study: {report.family.family.value}, k={report.k}, "
        f"{report.problem}, {report.variant.value} stabilization",
        "",
        "| level | n | h_max | ndof | energy_err | h1_err | l2_err | stab | min_rho_F | min_rho_K | max faces | cg_iters |",
        "|---|---|---|---|---|---|---|---|---|---|---|---|",
    ]
    for r in report.records:
        lines.append(
            f"| {r.level} | {r.n} | {r.h_max:.4e} | {r.ndof} | {r.energy_err:.4e} | {r.h1_err:.4e} "
            f"| {r.l2_err:.4e} | {r.stab_seminorm:.4e} | {r.min_rho_F:.4e} | {r.min_rho_K:.4e} "
            f"| {r.max_faces_per_cell} | {r.cg_iters} |"
        )
    lines += ["", "| error | rate | R^2 | last pair | expected | in window |", "|---|---|---|---|---|---|"]
    for name, fit in report.rates.items():
        window = "---" if fit.within_window is None else ("yes" if fit.within_window else "no")
        lines.append(f"| {name} | {_rate(fit.rate)} | {_rate(fit.r2)} | {_rate(fit.last_pair)} "
                     f"| {_rate(fit.expected)} | {window} |")
    if report.non_asymptotic:
        lines += ["", f"Energy fit R^2 below {R2_THRESHOLD}: levels are not in the asymptotic range."]
    return "\n".join(lines) + "\n"


def default_stem(report: ErrorReport) -> str:
    return f"study_{report.family.family.value}_k{report.k}_{report.variant.value}"


def write_reports(report: ErrorReport, output_dir: Path, stem: Optional[str] = None) -> Dict[str, Path]:
    """Write ``<stem>.csv``, ``<stem>.md`` and ``<stem>.json``."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or default_stem(report)
    paths = {
        "csv": write_csv(report, output_dir / f"{stem}.csv"),
        "md": output_dir / f"{stem}.md",
        "json": output_dir / f"{stem}.json",
    }
    paths["md"].write_text(format_markdown(report), encoding="utf-8")
    paths["json"].write_text(report.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Wrote study reports to {output_dir} ({stem}.*)")
    return paths


# Global study instance
_study = None


def get_convergence_study() -> ConvergenceStudy:
    """Get or create the global convergence study instance."""
    global _study
    if _study is None:
        _study = ConvergenceStudy()
    return _study


def convergence_study(family: MeshFamilyConfig, k: int, problem: str = "sinsinsin",
                      variant: StabilizationVariant = StabilizationVariant.NEW) -> ErrorReport:
    """Run a study with settings-derived solver defaults."""
    return get_convergence_study().run(family, k, problem, variant)
