"""Polygon and polyhedron geometry: frames, exact monomial integration,
chunkiness metrics and Gram-matrix solves.

Integrals of scaled monomials are exact. A monomial centred at a point c is
homogeneous of degree q in (x - c), so the divergence theorem reduces its
integral over a d-dimensional polytope to facet integrals:

    integral_D m = 1 / (d + q) * sum_facets ((a_f - c) . n_f) integral_f m

Polygons reduce to edge integrals evaluated by Gauss-Legendre rules of
sufficient order, polyhedra reduce to polygons through an exact
re-expansion of the cell monomials in each face basis.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import linprog
from scipy.spatial.distance import pdist

from vem.monomials import ScaledMonomialBasis, exponent_array, restriction_matrix

logger = logging.getLogger(__name__)

PLANARITY_TOLERANCE = 1e-10
CLOSURE_TOLERANCE = 1e-12
GRAM_CONDITION_LIMIT = 1e12


class GeometryError(Exception):
    """Raised when a polygon or polyhedron is degenerate or inconsistent."""
    pass


@dataclass(frozen=True)
class FaceFrame:
    """Orthonormal in-plane axes and unit normal of a planar face."""
    origin: np.ndarray
    axis1: np.ndarray
    axis2: np.ndarray
    normal: np.ndarray
    planarity: float

    @classmethod
    def from_vertices(cls, coords: np.ndarray) -> "FaceFrame":
        """Frame with Newell normal; axis1 follows the first edge."""
        coords = np.asarray(coords, dtype=float)
        area_vector = 0.5 * np.cross(coords, np.roll(coords, -1, axis=0)).sum(axis=0)
        norm = np.linalg.norm(area_vector)
        if norm == 0.0 or not np.isfinite(norm):
            raise GeometryError("Face has zero area")
        normal = area_vector / norm
        origin = coords[0]
        edge = coords[1] - coords[0]
        edge = edge - (edge @ normal) * normal
        length = np.linalg.norm(edge)
        if length == 0.0:
            raise GeometryError("Face has a zero-length first edge")
        axis1 = edge / length
        axis2 = np.cross(normal, axis1)
        axis2 /= np.linalg.norm(axis2)
        planarity = float(np.max(np.abs((coords - origin) @ normal)))
        return cls(origin=origin, axis1=axis1, axis2=axis2, normal=normal, planarity=planarity)

    @property
    def axes(self) -> np.ndarray:
        """3x2 matrix mapping local coordinates to global offsets."""
        return np.column_stack([self.axis1, self.axis2])

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float).reshape(-1, 3) - self.origin) @ self.axes

    def to_global(self, local: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(local, dtype=float).reshape(-1, 2) @ self.axes.T


@dataclass(frozen=True)
class Chunkiness:
    """Largest ball inside the star-shape kernel and its ratio to the diameter."""
    rho: float
    radius: float
    center: np.ndarray
    star_shaped: bool


@dataclass(frozen=True)
class GeomMetrics:
    """Size, shape and stabilization weight of one face or cell."""
    diameter: float
    measure: float
    centroid: np.ndarray
    rho: float
    eps_weight: Optional[float] = None


def _segment_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [0, 1] exact to ``order``."""
    x, w = np.polynomial.legendre.leggauss(order // 2 + 1)
    return 0.5 * (x + 1.0), 0.5 * w


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


class PolygonGeometry:
    """
    A planar simple polygon embedded in 3D.

    Local 2D coordinates come from the FaceFrame; the face basis is centred at
    the polygon centroid (in local coordinates) and scaled by the diameter.
    """

    def __init__(self, coords: np.ndarray):
        self.coords = np.asarray(coords, dtype=float)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3 or len(self.coords) < 3:
            raise GeometryError("A polygon needs at least 3 vertices in 3D")
        self.frame = FaceFrame.from_vertices(self.coords)
        self.diameter = float(pdist(self.coords).max())
        if self.frame.planarity > PLANARITY_TOLERANCE * self.diameter:
            raise GeometryError(
                f"Face is not planar: residual {self.frame.planarity:.3e} exceeds "
                f"{PLANARITY_TOLERANCE:.0e} * h_F"
            )
        self.local = self.frame.to_local(self.coords)
        edges = np.roll(self.local, -1, axis=0) - self.local
        self.edge_lengths = np.linalg.norm(edges, axis=1)
        if np.any(self.edge_lengths <= 1e-14 * self.diameter):
            raise GeometryError("Face has a degenerate edge")
        self._check_simple()
        cross = self.local[:, 0] * np.roll(self.local[:, 1], -1) - np.roll(self.local[:, 0], -1) * self.local[:, 1]
        self.area = 0.5 * float(cross.sum())
        if self.area <= 0.0:
            raise GeometryError("Face loop is not counter-clockwise about its normal")
        cx = float(((self.local[:, 0] + np.roll(self.local[:, 0], -1)) * cross).sum()) / (6.0 * self.area)
        cy = float(((self.local[:, 1] + np.roll(self.local[:, 1], -1)) * cross).sum()) / (6.0 * self.area)
        self.centroid_local = np.array([cx, cy])
        self.centroid = self.frame.to_global(self.centroid_local)[0]
        self._moments: Dict[int, np.ndarray] = {}

    def _check_simple(self) -> None:
        n = len(self.local)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(self.local[i], self.local[(i + 1) % n],
                                       self.local[j], self.local[(j + 1) % n]):
                    raise GeometryError(f"Face is self-intersecting (edges {i} and {j})")

    @property
    def num_vertices(self) -> int:
        return len(self.coords)

    @cached_property
    def outward_normals_local(self) -> np.ndarray:
        """Unit outward normals of the edges in local coordinates."""
        d = np.roll(self.local, -1, axis=0) - self.local
        return np.column_stack([d[:, 1], -d[:, 0]]) / self.edge_lengths[:, None]

    def basis(self, degree: int) -> ScaledMonomialBasis:
        return ScaledMonomialBasis(2, degree, self.centroid_local, self.diameter)

    def moments(self, degree: int) -> np.ndarray:
        """Integrals of every scaled face monomial of degree <= ``degree``."""
        cached = self._moments.get(degree)
        if cached is None:
            cached = integrate_monomial_polygon(self, degree)
            self._moments[degree] = cached
        return cached

    def halfspaces(self) -> Tuple[np.ndarray, np.ndarray]:
        """Kernel half-planes a . y <= b in local coordinates."""
        normals = self.outward_normals_local
        return normals, np.einsum("ij,ij->i", normals, self.local)


def integrate_monomial_polygon(polygon: PolygonGeometry, degree: int,
                               basis: Optional[ScaledMonomialBasis] = None) -> np.ndarray:
    """
    Exact integrals of the face monomials of degree <= ``degree``.

    A custom ``basis`` may be given as long as it is centred at a point of the
    face plane (its center is in local coordinates).
    """
    basis = basis or polygon.basis(degree)
    t, w = _segment_rule(basis.degree)
    start = polygon.local
    end = np.roll(polygon.local, -1, axis=0)
    points = start[:, None, :] + t[None, :, None] * (end - start)[:, None, :]
    lever = np.einsum("ij,ij->i", start - basis.center, polygon.outward_normals_local)
    weights = (lever * polygon.edge_lengths)[:, None] * w[None, :]
    values = basis.evaluate(points.reshape(-1, 2))
    raw = weights.reshape(-1) @ values
    degrees = exponent_array(2, basis.degree).sum(axis=1)
    return raw / (2.0 + degrees)


class PolyhedronGeometry:
    """A closed, outward-oriented simple polyhedron given by its faces."""

    def __init__(self, faces: Sequence[PolygonGeometry], signs: Sequence[int]):
        if len(faces) < 4:
            raise GeometryError("A polyhedron needs at least 4 faces")
        if len(faces) != len(signs):
            raise GeometryError("Face and orientation lists differ in length")
        self.faces = list(faces)
        self.signs = np.array([1 if s > 0 else -1 for s in signs], dtype=int)
        self.vertices = np.unique(np.vstack([f.coords for f in self.faces]), axis=0)
        self.diameter = float(pdist(self.vertices).max())
        self.normals = np.array([s * f.frame.normal for f, s in zip(self.faces, self.signs)])
        areas = np.array([f.area for f in self.faces])
        self.surface_area = float(areas.sum())
        closure = np.linalg.norm((areas[:, None] * self.normals).sum(axis=0))
        if closure > CLOSURE_TOLERANCE * self.surface_area:
            raise GeometryError(f"Cell boundary is not closed (flux mismatch {closure:.3e})")

        provisional = self.vertices.mean(axis=0)
        levers = np.array([(f.centroid - provisional) @ n for f, n in zip(self.faces, self.normals)])
        self.volume = float((levers * areas).sum() / 3.0)
        if self.volume <= 0.0:
            raise GeometryError(f"Cell has non-positive volume {self.volume:.3e}; faces are not outward")
        first = ((levers * areas)[:, None] * (np.array([f.centroid for f in self.faces]) - provisional)).sum(axis=0)
        self.centroid = provisional + first / (4.0 * self.volume)
        self._moments: Dict[int, np.ndarray] = {}
        self._restrictions: Dict[Tuple[int, int], np.ndarray] = {}

    def basis(self, degree: int) -> ScaledMonomialBasis:
        return ScaledMonomialBasis(3, degree, self.centroid, self.diameter)

    def moments(self, degree: int) -> np.ndarray:
        cached = self._moments.get(degree)
        if cached is None:
            cached = integrate_monomial_polyhedron(self, degree)
            self._moments[degree] = cached
        return cached

    def face_restriction(self, index: int, degree: int) -> np.ndarray:
        """Re-expansion of degree-``degree`` cell monomials in the face basis."""
        cached = self._restrictions.get((index, degree))
        if cached is None:
            face = self.faces[index]
            cached = restriction_matrix(self.basis(degree), face.frame.origin, face.frame.axes, face.basis(degree))
            self._restrictions[(index, degree)] = cached
        return cached

    def halfspaces(self) -> Tuple[np.ndarray, np.ndarray]:
        offsets = np.array([f.frame.origin @ n for f, n in zip(self.faces, self.normals)])
        return self.normals, offsets


def integrate_monomial_polyhedron(cell: PolyhedronGeometry, degree: int) -> np.ndarray:
    """Exact integrals of the scaled cell monomials of degree <= ``degree``."""
    basis = cell.basis(degree)
    total = np.zeros(basis.size)
    for index, (face, normal) in enumerate(zip(cell.faces, cell.normals)):
        lever = (face.frame.origin - cell.centroid) @ normal
        if lever == 0.0:
            continue
        restricted = cell.face_restriction(index, degree)
        total += lever * (face.moments(degree) @ restricted)
    degrees = exponent_array(3, degree).sum(axis=1)
    return total / (3.0 + degrees)


def chunkiness(shape) -> Chunkiness:
    """
    Chebyshev ball of the star-shape kernel of a polygon or polyhedron.

    The kernel is the intersection of the facet half-spaces; the LP runs in
    coordinates centred at the centroid and scaled by the diameter, so the
    optimal radius is rho directly.
    """
    if isinstance(shape, PolygonGeometry):
        normals, offsets = shape.halfspaces()
        center = shape.centroid_local
    elif isinstance(shape, PolyhedronGeometry):
        normals, offsets = shape.halfspaces()
        center = shape.centroid
    else:
        raise TypeError(f"Unsupported shape type: {type(shape).__name__}")
    h = shape.diameter
    scaled_offsets = (offsets - normals @ center) / h
    key = tuple(np.round(np.column_stack([normals, scaled_offsets]), 12).ravel().tolist())
    rho, point = _chebyshev_ball(key, normals.shape[1])
    if rho <= 0.0:
        return Chunkiness(rho=0.0, radius=0.0, center=np.asarray(center, dtype=float), star_shaped=False)
    local_center = center + h * np.asarray(point)
    if isinstance(shape, PolygonGeometry):
        local_center = shape.frame.to_global(local_center)[0]
    return Chunkiness(rho=rho, radius=rho * h, center=local_center, star_shaped=True)


@lru_cache(maxsize=4096)
def _chebyshev_ball(key: Tuple[float, ...], dim: int) -> Tuple[float, Tuple[float, ...]]:
    rows = np.array(key).reshape(-1, dim + 1)
    normals, offsets = rows[:, :dim], rows[:, dim]
    a_ub = np.column_stack([normals, np.linalg.norm(normals, axis=1)])
    cost = np.zeros(dim + 1)
    cost[-1] = -1.0
    bounds = [(None, None)] * dim + [(0.0, None)]
    result = linprog(cost, A_ub=a_ub, b_ub=offsets, bounds=bounds, method="highs")
    if result.status != 0:
        logger.debug(f"Chebyshev LP did not solve: {result.message}")
        return 0.0, (0.0,) * dim
    radius = float(result.x[-1])
    if radius <= 1e-14:
        return 0.0, (0.0,) * dim
    return radius, tuple(float(v) for v in result.x[:dim])


def centroid_in_kernel(shape, margin: float = 1e-10) -> bool:
    """True when the centroid lies strictly inside every facet half-space."""
    normals, offsets = shape.halfspaces()
    center = shape.centroid_local if isinstance(shape, PolygonGeometry) else shape.centroid
    slack = offsets - normals @ center
    return bool(np.all(slack > margin * shape.diameter))


def orthonormal_basis(gram: np.ndarray) -> np.ndarray:
    """
    Columns T with T^T G T = I, by modified Gram-Schmidt in the G inner product.

    Each vector is orthogonalized twice. Directions that vanish numerically
    are dropped, so T may have fewer columns than G.
    """
    n = gram.shape[0]
    scale = np.sqrt(np.abs(np.diag(gram)).max()) if n else 1.0
    columns: List[np.ndarray] = []
    for j in range(n):
        v = np.zeros(n)
        v[j] = 1.0
        for _ in range(2):
            for q in columns:
                v = v - (q @ gram @ v) * q
        norm_sq = v @ gram @ v
        if norm_sq <= (1e-13 * scale) ** 2 * (v @ v):
            continue
        columns.append(v / np.sqrt(norm_sq))
    return np.column_stack(columns) if columns else np.zeros((n, 0))


def solve_gram(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve G x = rhs for a symmetric positive semidefinite Gram matrix.

    Uses pivoted Cholesky; an ill-conditioned or rank-deficient G falls back
    to an orthonormalized basis.
    """
    gram = np.asarray(gram, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if gram.size == 0:
        return np.zeros_like(rhs)
    cond = np.linalg.cond(gram)
    if np.isfinite(cond) and cond <= GRAM_CONDITION_LIMIT:
        factor, piv, rank, info = linalg.lapack.dpstrf(gram, lower=0)
        if info == 0 and rank == gram.shape[0]:
            upper = np.triu(factor)
            perm = piv - 1
            permuted = rhs[perm]
            y = linalg.solve_triangular(upper, permuted, trans="T")
            z = linalg.solve_triangular(upper, y)
            x = np.empty_like(z)
            x[perm] = z
            return x
    logger.warning(f"Gram matrix ill-conditioned (cond={cond:.3e}); using orthonormalized basis")
    t = orthonormal_basis(gram)
    return t @ (t.T @ rhs)

