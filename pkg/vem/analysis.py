"""Error norms, the error-equation check and single-problem solve pipeline."""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np
from scipy.sparse.linalg import norm as sparse_norm

from vem.assembly import GlobalSystem, ReducedSystem, apply_dirichlet, assemble, solve
from vem.config import get_settings
from vem.interpolation import interpolate
from vem.local import CellSpace, DofVector
from vem.mesh import PolyMesh
from vem.models import IdentityReport, StabilizationVariant
from vem.problems import ManufacturedProblem
from vem.quadrature import quadrature_cell, quadrature_face

logger = logging.getLogger(__name__)

# Face and cell quadrature order of the identity check is 2k + this
IDENTITY_QUAD_EXTRA = 8


class AnalysisError(Exception):
    """Raised when an error functional is inconsistent with the assembled system."""
    pass


def _error_order(system: GlobalSystem, order: Optional[int]) -> int:
    return 2 * system.k + get_settings().quad_extra if order is None else order


def energy_error(system: GlobalSystem, u_h: DofVector, u_I: DofVector) -> float:
    """sqrt((u_h - u_I)^T A (u_h - u_I)) with the pre-elimination matrix."""
    diff = u_h.values - u_I.values
    value = system.energy(diff)
    scale = sparse_norm(system.matrix, np.inf) * float(diff @ diff)
    if value < -1e-12 * max(scale, 1.0):
        logger.error(f"Negative energy {value:.3e}; assembled form is not semi-definite")
        raise AnalysisError(f"Negative quadratic form {value:.3e}")
    return float(np.sqrt(max(value, 0.0)))


def broken_h1_error(system: GlobalSystem, u_h: DofVector, problem: ManufacturedProblem,
                    order: Optional[int] = None) -> float:
    """(sum_K |u - Pi_K u_h|_{1,K}^2)^(1/2) by cell quadrature."""
    order = _error_order(system, order)
    total = 0.0
    for space in system.cells:
        coeffs = space.pi @ u_h.cell_values(space.layout)
        points, weights = quadrature_cell(space.geometry, order)
        grad = np.einsum('psd,s->pd', space.basis.gradient(points), coeffs)
        diff = np.asarray(problem.grad(points), dtype=float) - grad
        total += weights @ np.sum(diff ** 2, axis=1)
    return float(np.sqrt(total))


def l2_error(system: GlobalSystem, u_h: DofVector, problem: ManufacturedProblem,
             order: Optional[int] = None) -> float:
    """(sum_K ||u - Q_K u_h||_{0,K}^2)^(1/2) by cell quadrature."""
    order = _error_order(system, order)
    total = 0.0
    for space in system.cells:
        coeffs = space.q @ u_h.cell_values(space.layout)
        points, weights = quadrature_cell(space.geometry, order)
        diff = np.asarray(problem.u(points), dtype=float) - space.basis.evaluate(points) @ coeffs
        total += weights @ diff ** 2
    return float(np.sqrt(total))


def stab_seminorm(system: GlobalSystem, u_I: DofVector) -> float:
    """sqrt(sum_K S_K(u_I, u_I))."""
    total = 0.0
    for space, stiffness in zip(system.cells, system.local):
        x = u_I.cell_values(space.layout)
        total += x @ stiffness.stabilization @ x
    return float(np.sqrt(max(total, 0.0)))


def continuous_energy_projection(space: CellSpace, problem: ManufacturedProblem, order: int) -> np.ndarray:
    """
    Coefficients of Pi_K u for an analytic u, normalized like the discrete
    projector: boundary mean at k = 1, cell mean at k >= 2.
    """
    points, weights = quadrature_cell(space.geometry, order)
    grads = space.basis.gradient(points)
    rhs = np.einsum('p,pad,pd->a', weights, grads, np.asarray(problem.grad(points), dtype=float))
    if space.k == 1:
        rhs[0] = 0.0
        for blk in space.blocks:
            fpoints, fweights = quadrature_face(blk.space.geometry, order)
            rhs[0] += fweights @ np.asarray(problem.u(fpoints), dtype=float)
    else:
        rhs[0] = weights @ np.asarray(problem.u(points), dtype=float)
    return np.linalg.solve(space.gram, rhs)


def _flux_row(space: CellSpace, coeffs: np.ndarray, problem: ManufacturedProblem, order: int) -> np.ndarray:
    """Row of sum_F (grad(Pi_K u - u).n, Q_K v - Q_F v)_F against local DOFs."""
    row = np.zeros(space.size)
    for blk in space.blocks:
        fs = blk.space
        points, weights = quadrature_face(fs.geometry, order)
        flux = (space.basis.gradient(points) @ blk.normal) @ coeffs
        flux = flux - np.asarray(problem.grad(points), dtype=float) @ blk.normal
        cell_vals = space.basis.evaluate(points) @ space.q
        face_vals = fs.basis.evaluate(fs.geometry.frame.to_local(points)) @ blk.q
        row += (weights * flux) @ (cell_vals - face_vals)
    return row


def error_equation_vectors(system: GlobalSystem, problem: ManufacturedProblem, u_h: DofVector,
                           u_I: DofVector, order: int):
    """
    Global vectors L and R with a_h(u_h - u_I, v) = L.v and the right side of
    the error equation equal to R.v for every v vanishing on the boundary.
    """
    left = system.matrix @ (u_h.values - u_I.values)
    right = np.zeros(system.ndof)
    for space, stiffness in zip(system.cells, system.local):
        x = u_I.cell_values(space.layout)
        coeffs = continuous_energy_projection(space, problem, order)
        local = space.pi.T @ (space.stiffness @ (coeffs - space.pi @ x))
        local += _flux_row(space, coeffs, problem, order)
        local -= stiffness.stabilization @ x
        np.add.at(right, space.layout.global_dofs, local)
    return left, right


def verify_error_equation(system: GlobalSystem, reduced: ReducedSystem, problem: ManufacturedProblem,
                          u_h: DofVector, u_I: DofVector, trials: int = 10, seed: int = 0,
                          order: Optional[int] = None) -> IdentityReport:
    """
    Compare both sides of the error equation on random test vectors that
    vanish on the constrained DOFs.
    """
    order = 2 * system.k + IDENTITY_QUAD_EXTRA if order is None else order
    left, right = error_equation_vectors(system, problem, u_h, u_I, order)
    norm_ui = np.sqrt(max(system.energy(u_I.values), 0.0))
    rng = np.random.default_rng(seed)
    eps = np.finfo(float).eps
    lhs_values, rhs_values, gaps, gated, literal = [], [], [], [], []
    for _ in range(trials):
        v = np.zeros(system.ndof)
        v[reduced.free] = rng.standard_normal(len(reduced.free))
        lhs, rhs = float(left @ v), float(right @ v)
        gap = abs(lhs - rhs)
        scale = norm_ui * np.sqrt(max(system.energy(v), 0.0))
        lhs_values.append(abs(lhs))
        rhs_values.append(abs(rhs))
        gaps.append(gap)
        gated.append(gap / (abs(lhs) + abs(rhs) + scale) if gap > 0 else 0.0)
        literal.append(gap / (abs(lhs) + abs(rhs) + eps))
    report = IdentityReport(
        trials=trials,
        quad_order=order,
        max_residual=float(max(gaps, default=0.0)),
        max_relative_residual=float(max(gated, default=0.0)),
        max_literal_residual=float(max(literal, default=0.0)),
        max_abs_lhs=float(max(lhs_values, default=0.0)),
        max_abs_rhs=float(max(rhs_values, default=0.0)),
        residuals=[float(r) for r in gated],
    )
    logger.info(f"Error equation: max relative residual {report.max_relative_residual:.3e} "
                f"over {trials} trials (quadrature order {order})")
    return report


def quadrature_sweep(system: GlobalSystem, reduced: ReducedSystem, problem: ManufacturedProblem,
                     u_h: DofVector, u_I: DofVector, orders: Iterable[int], trials: int = 10,
                     seed: int = 0) -> Dict[int, IdentityReport]:
    """Identity residual for each face and cell quadrature order."""
    reports = {}
    for order in orders:
        reports[order] = verify_error_equation(system, reduced, problem, u_h, u_I, trials, seed, order)
        logger.info(f"Quadrature order {order}: residual {reports[order].max_relative_residual:.3e}")
    return reports


@dataclass
class SolveOutcome:
    """Discrete solution of a manufactured problem with its interpolant and errors."""
    system: GlobalSystem
    reduced: ReducedSystem
    u_h: DofVector
    u_I: DofVector
    energy_err: float
    h1_err: float
    l2_err: float
    stab_seminorm: float

    @property
    def cg_iters(self) -> int:
        return self.system.stats.iterations if self.system.stats else 0


def solve_problem(mesh: PolyMesh, k: int, problem: ManufacturedProblem,
                  variant: StabilizationVariant = StabilizationVariant.NEW,
                  c_eps: Optional[float] = None, tol: Optional[float] = None,
                  max_iter: Optional[int] = None, quad_order: Optional[int] = None,
                  threads: Optional[int] = None) -> SolveOutcome:
    """Assemble, eliminate g = u on the boundary, solve and measure the three errors."""
    system = assemble(mesh, k, variant, f=problem.f, c_eps=c_eps, quad_order=quad_order, threads=threads)
    reduced = apply_dirichlet(system, problem.g)
    u_h = solve(system, reduced, tol=tol, max_iter=max_iter)
    u_I = interpolate(mesh, k, problem.u, order=system.quad_order, dofmap=system.dofmap)
    outcome = SolveOutcome(
        system=system,
        reduced=reduced,
        u_h=u_h,
        u_I=u_I,
        energy_err=energy_error(system, u_h, u_I),
        h1_err=broken_h1_error(system, u_h, problem, quad_order),
        l2_err=l2_error(system, u_h, problem, quad_order),
        stab_seminorm=stab_seminorm(system, u_I),
    )
    logger.info(f"{problem.name}, k={k}: energy {outcome.energy_err:.3e}, "
                f"H1 {outcome.h1_err:.3e}, L2 {outcome.l2_err:.3e}")
    return outcome
