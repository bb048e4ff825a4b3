"""Quadrature rules on edges, faces and cells.

Faces are fan-triangulated and cells fan-tetrahedralized from an apex in the
star-shape kernel. Simplex rules are collapsed Gauss-Jacobi products.
"""

import logging
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from scipy.special import roots_jacobi

from vem.geometry import GeometryError, PolygonGeometry, PolyhedronGeometry, centroid_in_kernel, chunkiness

logger = logging.getLogger(__name__)

Rule = Tuple[np.ndarray, np.ndarray]


def _npoints(order: int) -> int:
    if order < 0:
        raise ValueError(f"Quadrature order must be non-negative, got {order}")
    return order // 2 + 1


def _jacobi01(n: int, alpha: float) -> Rule:
    """Gauss-Jacobi on [0, 1] for the weight (1 - u)**alpha."""
    if alpha == 0:
        x, w = np.polynomial.legendre.leggauss(n)
    else:
        x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def segment_rule(order: int) -> Rule:
    """Reference rule on [0, 1] exact for polynomials of degree ``order``."""
    return _jacobi01(_npoints(order), 0)


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> Rule:
    """Reference rule on the triangle (0,0), (1,0), (0,1); weights sum to 1/2."""
    n = _npoints(order)
    u, wu = _jacobi01(n, 1)
    v, wv = _jacobi01(n, 0)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    points = np.column_stack([uu.ravel(), ((1.0 - uu) * vv).ravel()])
    weights = np.outer(wu, wv).ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


@lru_cache(maxsize=None)
def tetrahedron_rule(order: int) -> Rule:
    """Reference rule on the unit tetrahedron; weights sum to 1/6."""
    n = _npoints(order)
    u, wu = _jacobi01(n, 2)
    v, wv = _jacobi01(n, 1)
    w, ww = _jacobi01(n, 0)
    uu, vv, ww_ = np.meshgrid(u, v, w, indexing="ij")
    points = np.column_stack([
        uu.ravel(),
        ((1.0 - uu) * vv).ravel(),
        ((1.0 - uu) * (1.0 - vv) * ww_).ravel(),
    ])
    weights = np.einsum("i,j,k->ijk", wu, wv, ww).ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def quadrature_edge(start: np.ndarray, end: np.ndarray, order: int) -> Rule:
    """Points and weights on the segment from ``start`` to ``end``."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    length = float(np.linalg.norm(end - start))
    if length == 0.0:
        raise GeometryError("Edge has zero length")
    t, w = segment_rule(order)
    return start + t[:, None] * (end - start), w * length


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def face_apex(face: PolygonGeometry) -> np.ndarray:
    """Fan apex of a face in local coordinates."""
    if centroid_in_kernel(face):
        return face.centroid_local
    metrics = chunkiness(face)
    if not metrics.star_shaped:
        raise GeometryError("Face is not star-shaped; no fan triangulation exists")
    return face.frame.to_local(metrics.center)[0]


def cell_apex(cell: PolyhedronGeometry) -> np.ndarray:
    if centroid_in_kernel(cell):
        return cell.centroid
    metrics = chunkiness(cell)
    if not metrics.star_shaped:
        raise GeometryError("Cell is not star-shaped; no fan tetrahedralization exists")
    return metrics.center


def triangulate_face(face: PolygonGeometry) -> np.ndarray:
    """Fan triangles (apex, v_i, v_i+1) in local coordinates; shape (m, 3, 2)."""
    apex = face_apex(face)
    nxt = np.roll(face.local, -1, axis=0)
    triangles = np.stack([np.broadcast_to(apex, face.local.shape), face.local, nxt], axis=1)
    doubled = _cross2(triangles[:, 1] - triangles[:, 0], triangles[:, 2] - triangles[:, 0])
    if np.any(doubled <= 0.0):
        raise GeometryError("Fan triangle with non-positive area")
    return triangles


def quadrature_face(face: PolygonGeometry, order: int, local: bool = False) -> Rule:
    """
    Quadrature over a face exact for polynomials of degree ``order``.

    Points are global 3D coordinates unless ``local`` is set.
    """
    triangles = triangulate_face(face)
    ref_points, ref_weights = triangle_rule(order)
    e1 = triangles[:, 1] - triangles[:, 0]
    e2 = triangles[:, 2] - triangles[:, 0]
    jac = _cross2(e1, e2)
    points = (triangles[:, None, 0, :]
              + ref_points[None, :, 0, None] * e1[:, None, :]
              + ref_points[None, :, 1, None] * e2[:, None, :]).reshape(-1, 2)
    weights = (jac[:, None] * ref_weights[None, :]).ravel()
    if local:
        return points, weights
    return face.frame.to_global(points), weights


def tetrahedralize_cell(cell: PolyhedronGeometry) -> np.ndarray:
    """Fan tetrahedra (apex, face apex, v_i, v_i+1) with positive volume; shape (m, 4, 3)."""
    apex = cell_apex(cell)
    tets: List[np.ndarray] = []
    for face, sign in zip(cell.faces, cell.signs):
        triangles = face.frame.to_global(triangulate_face(face).reshape(-1, 2)).reshape(-1, 3, 3)
        if sign < 0:
            triangles = triangles[:, [0, 2, 1]]
        for tri in triangles:
            tets.append(np.vstack([apex, tri]))
    tets = np.array(tets)
    p0 = tets[:, 1]
    volumes = np.einsum("ij,ij->i", p0 - tets[:, 0],
                        np.cross(tets[:, 2] - p0, tets[:, 3] - p0)) / 6.0
    if np.any(volumes <= 0.0):
        raise GeometryError(f"Fan tetrahedron with non-positive volume {volumes.min():.3e}")
    return tets


def quadrature_cell(cell: PolyhedronGeometry, order: int) -> Rule:
    """Quadrature over a cell exact for polynomials of degree ``order``."""
    tets = tetrahedralize_cell(cell)
    ref_points, ref_weights = tetrahedron_rule(order)
    base = tets[:, 0]
    edges = tets[:, 1:] - base[:, None, :]
    jac = np.abs(np.linalg.det(edges))
    points = base[:, None, :] + np.einsum("qj,tjd->tqd", ref_points, edges)
    weights = (jac[:, None] * ref_weights[None, :]).ravel()
    return points.reshape(-1, 3), weights
