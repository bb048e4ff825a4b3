"""Scaled monomial bases and exact polynomial re-expansion.

Monomials are ordered graded-lexicographically: all multi-indices of total
degree 0, then degree 1, and so on, each degree listed with the first
exponent descending. The order is prefix-consistent, so the first
``basis_size(dim, d)`` entries of a degree-``k`` basis span P_d for every
d <= k. Every projector matrix in the package relies on this layout.
"""

import itertools
from functools import lru_cache
from math import comb
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import signal

MultiIndex = Tuple[int, ...]


@lru_cache(maxsize=None)
def multi_indices(dim: int, degree: int) -> Tuple[MultiIndex, ...]:
    """Multi-indices of total degree <= ``degree`` in graded lexicographic order."""
    if degree < 0:
        return ()
    indices: List[MultiIndex] = []
    for d in range(degree + 1):
        for alpha in itertools.product(range(d, -1, -1), repeat=dim):
            if sum(alpha) == d:
                indices.append(alpha)
    return tuple(indices)


def basis_size(dim: int, degree: int) -> int:
    """Dimension of P_degree in ``dim`` variables (0 for negative degree)."""
    if degree < 0:
        return 0
    return comb(degree + dim, dim)


@lru_cache(maxsize=None)
def index_map(dim: int, degree: int) -> Dict[MultiIndex, int]:
    return {alpha: i for i, alpha in enumerate(multi_indices(dim, degree))}


@lru_cache(maxsize=None)
def exponent_array(dim: int, degree: int) -> np.ndarray:
    exps = np.array(multi_indices(dim, degree), dtype=int).reshape(-1, dim)
    exps.setflags(write=False)
    return exps


@lru_cache(maxsize=None)
def product_table(dim: int, degree: int) -> np.ndarray:
    """Index of m_a * m_b in the degree ``2 * degree`` basis, for a, b <= degree."""
    high = index_map(dim, 2 * degree)
    alphas = multi_indices(dim, degree)
    table = np.empty((len(alphas), len(alphas)), dtype=int)
    for i, a in enumerate(alphas):
        for j, b in enumerate(alphas):
            table[i, j] = high[tuple(x + y for x, y in zip(a, b))]
    table.setflags(write=False)
    return table


class ScaledMonomialBasis:
    """
    Scaled monomials m_a(x) = prod(((x - center) / diameter) ** a) of degree <= k.

    Products of two basis members are again scaled monomials with the same
    center and diameter, so Gram matrices come straight from a table of
    monomial integrals of twice the degree.
    """

    def __init__(self, dim: int, degree: int, center: Sequence[float], diameter: float):
        if dim not in (1, 2, 3):
            raise ValueError(f"Unsupported dimension: {dim}")
        if degree < 0:
            raise ValueError(f"Degree must be non-negative, got {degree}")
        if not diameter > 0:
            raise ValueError(f"Diameter must be positive, got {diameter}")
        self.dim = dim
        self.degree = degree
        self.center = np.asarray(center, dtype=float).reshape(dim)
        self.diameter = float(diameter)
        self.exponents = exponent_array(dim, degree)

    @property
    def size(self) -> int:
        return len(self.exponents)

    @property
    def multi_indices(self) -> Tuple[MultiIndex, ...]:
        return multi_indices(self.dim, self.degree)

    def scaled(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return (points - self.center) / self.diameter

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values of every basis member at ``points``; shape (npoints, size)."""
        s = self.scaled(points)
        return np.prod(s[:, None, :] ** self.exponents[None, :, :], axis=2)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradients at ``points``; shape (npoints, size, dim)."""
        s = self.scaled(points)
        grads = np.empty((len(s), self.size, self.dim))
        for axis in range(self.dim):
            lowered = self.exponents.copy()
            lowered[:, axis] = np.maximum(lowered[:, axis] - 1, 0)
            values = np.prod(s[:, None, :] ** lowered[None, :, :], axis=2)
            grads[:, :, axis] = values * self.exponents[:, axis] / self.diameter
        return grads

    def derivative_matrix(self, axis: int) -> np.ndarray:
        """Matrix D with coefficients(d/dx_axis p) = D @ coefficients(p)."""
        return _derivative_matrix(self.dim, self.degree, axis) / self.diameter

    def laplacian_matrix(self) -> np.ndarray:
        lap = np.zeros((self.size, self.size))
        for axis in range(self.dim):
            d = self.derivative_matrix(axis)
            lap += d @ d
        return lap

    def directional_derivative_matrix(self, direction: Sequence[float]) -> np.ndarray:
        direction = np.asarray(direction, dtype=float)
        return sum(direction[axis] * self.derivative_matrix(axis) for axis in range(self.dim))

    def __repr__(self) -> str:
        return (f"ScaledMonomialBasis(dim={self.dim}, degree={self.degree}, "
                f"center={self.center.tolist()}, diameter={self.diameter:.6g})")


@lru_cache(maxsize=None)
def _derivative_matrix(dim: int, degree: int, axis: int) -> np.ndarray:
    lookup = index_map(dim, degree)
    alphas = multi_indices(dim, degree)
    d = np.zeros((len(alphas), len(alphas)))
    for j, alpha in enumerate(alphas):
        if alpha[axis] == 0:
            continue
        lowered = list(alpha)
        lowered[axis] -= 1
        d[lookup[tuple(lowered)], j] = alpha[axis]
    d.setflags(write=False)
    return d


def mass_matrix(moments: np.ndarray, dim: int, degree: int) -> np.ndarray:
    """L2 Gram matrix of the degree-``degree`` basis from integrals of degree ``2 * degree``."""
    table = product_table(dim, degree)
    if len(moments) < basis_size(dim, 2 * degree):
        raise ValueError("Monomial integrals of twice the basis degree are required")
    return np.asarray(moments)[table]


def stiffness_matrix(moments: np.ndarray, dim: int, degree: int, diameter: float) -> np.ndarray:
    """Gradient Gram matrix (grad m_a, grad m_b) from the monomial integral table."""
    alphas = multi_indices(dim, degree)
    high = index_map(dim, 2 * degree)
    n = len(alphas)
    g = np.zeros((n, n))
    for i, a in enumerate(alphas):
        for j in range(i, n):
            b = alphas[j]
            total = 0.0
            for axis in range(dim):
                if a[axis] == 0 or b[axis] == 0:
                    continue
                combined = [x + y for x, y in zip(a, b)]
                combined[axis] -= 2
                total += a[axis] * b[axis] * moments[high[tuple(combined)]]
            g[i, j] = g[j, i] = total / diameter ** 2
    return g


def restriction_matrix(source: ScaledMonomialBasis, origin: Sequence[float],
                       axes: np.ndarray, target: ScaledMonomialBasis) -> np.ndarray:
    """
    Exact re-expansion of ``source`` polynomials on an affine subspace.

    The subspace is parametrized by x = origin + axes @ y, where y are the
    unscaled coordinates of the ``target`` basis. Returns R with
    coefficients_target(p restricted) = R @ coefficients_source(p).
    Degrees are preserved, so ``target.degree`` must be at least
    ``source.degree``.
    """
    if target.degree < source.degree:
        raise ValueError("Target basis degree must not be lower than the source degree")
    axes = np.asarray(axes, dtype=float).reshape(source.dim, target.dim)
    origin = np.asarray(origin, dtype=float).reshape(source.dim)

    # scaled source coordinates t = shift + linear @ s, s = scaled target coordinates
    shift = (origin + axes @ target.center - source.center) / source.diameter
    linear = axes * (target.diameter / source.diameter)

    q = source.degree
    shape = (q + 1,) * target.dim
    powers = []
    for i in range(source.dim):
        factor = np.zeros(shape)
        factor[(0,) * target.dim] = shift[i]
        # constants have no linear part
        for j in range(target.dim if q >= 1 else 0):
            unit = [0] * target.dim
            unit[j] = 1
            factor[tuple(unit)] = linear[i, j]
        axis_powers = [_unit_array(shape)]
        for _ in range(q):
            axis_powers.append(_truncate(signal.convolve(axis_powers[-1], factor, method="direct"), shape))
        powers.append(axis_powers)

    lookup = index_map(target.dim, target.degree)
    r = np.zeros((target.size, source.size))
    for j, alpha in enumerate(source.multi_indices):
        poly = powers[0][alpha[0]]
        for i in range(1, source.dim):
            poly = _truncate(signal.convolve(poly, powers[i][alpha[i]], method="direct"), shape)
        for beta in zip(*np.nonzero(poly)):
            if sum(beta) <= target.degree:
                r[lookup[tuple(int(b) for b in beta)], j] = poly[beta]
    return r


def _unit_array(shape: Tuple[int, ...]) -> np.ndarray:
    unit = np.zeros(shape)
    unit[(0,) * len(shape)] = 1.0
    return unit


def _truncate(array: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    return array[tuple(slice(0, n) for n in shape)]


def edge_basis(degree: int) -> ScaledMonomialBasis:
    """1D monomials tau**j on the reference parameter tau in [-1/2, 1/2]."""
    return ScaledMonomialBasis(1, degree, [0.0], 1.0)


@lru_cache(maxsize=None)
def interval_moments(degree: int) -> np.ndarray:
    """Integrals of tau**j over [-1/2, 1/2] for j <= degree."""
    j = np.arange(degree + 1)
    moments = np.where(j % 2 == 0, 2.0 * 0.5 ** (j + 1) / (j + 1), 0.0)
    moments.setflags(write=False)
    return moments


def interval_mass(rows_degree: int, cols_degree: int) -> np.ndarray:
    """Matrix of integrals of tau**(i + j) over [-1/2, 1/2]."""
    if rows_degree < 0 or cols_degree < 0:
        return np.zeros((max(rows_degree + 1, 0), max(cols_degree + 1, 0)))
    moments = interval_moments(rows_degree + cols_degree)
    i = np.arange(rows_degree + 1)[:, None]
    j = np.arange(cols_degree + 1)[None, :]
    return moments[i + j]
