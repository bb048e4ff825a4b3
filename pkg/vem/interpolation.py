"""Canonical interpolation: the VEM function sharing all DOFs with a given u."""

import logging
from typing import Callable, Iterable, Optional

import numpy as np

from vem.config import get_settings
from vem.local import DofMap, DofVector
from vem.mesh import PolyMesh
from vem.quadrature import quadrature_cell, quadrature_face, segment_rule

logger = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]


def edge_moments(mesh: PolyMesh, edge: int, k: int, u: Field, order: int) -> np.ndarray:
    """(1/|e|) int_e u tau^m for m <= k-2."""
    if k < 2:
        return np.zeros(0)
    a, b = mesh.edges[edge]
    start, end = mesh.vertices[a], mesh.vertices[b]
    t, w = segment_rule(order)
    values = np.asarray(u(start + t[:, None] * (end - start)), dtype=float)
    tau = t - 0.5
    return np.array([w @ (values * tau ** m) for m in range(k - 1)])


def face_moments(mesh: PolyMesh, face: int, k: int, u: Field, order: int) -> np.ndarray:
    """(1/|F|) int_F u m_b for the face monomials of degree <= k-2."""
    if k < 2:
        return np.zeros(0)
    geometry = mesh.face_geometry(face)
    points, weights = quadrature_face(geometry, order)
    basis = geometry.basis(k - 2)
    values = np.asarray(u(points), dtype=float)
    return basis.evaluate(geometry.frame.to_local(points)).T @ (weights * values) / geometry.area


def cell_moments(mesh: PolyMesh, cell: int, k: int, u: Field, order: int) -> np.ndarray:
    """(1/|K|) int_K u m_b for the cell monomials of degree <= k-2."""
    if k < 2:
        return np.zeros(0)
    geometry = mesh.cell_geometry(cell)
    points, weights = quadrature_cell(geometry, order)
    values = np.asarray(u(points), dtype=float)
    return geometry.basis(k - 2).evaluate(points).T @ (weights * values) / geometry.volume


def interpolate_entities(dofmap: DofMap, u: Field, order: int,
                         vertices: Iterable[int], edges: Iterable[int],
                         faces: Iterable[int], cells: Iterable[int]) -> np.ndarray:
    """Global vector holding the DOFs of u on the given entities and zero elsewhere."""
    mesh, k = dofmap.mesh, dofmap.k
    values = np.zeros(dofmap.ndof)
    vertices = np.asarray(list(vertices), dtype=int)
    if len(vertices):
        values[vertices] = np.asarray(u(mesh.vertices[vertices]), dtype=float)
    if k >= 2:
        for e in edges:
            values[dofmap.edge_dofs(e)] = edge_moments(mesh, e, k, u, order)
        for f in faces:
            values[dofmap.face_dofs(f)] = face_moments(mesh, f, k, u, order)
        for c in cells:
            values[dofmap.cell_dofs(c)] = cell_moments(mesh, c, k, u, order)
    return values


def interpolate(mesh: PolyMesh, k: int, u: Field, order: Optional[int] = None,
                dofmap: Optional[DofMap] = None) -> DofVector:
    """
    Interpolant u_I: vertex values and edge, face and cell moments.

    Moments use quadrature of order 2k + VEM_QUAD_EXTRA unless ``order`` is given.
    """
    dofmap = dofmap or DofMap(mesh, k)
    order = order if order is not None else 2 * k + get_settings().quad_extra
    values = interpolate_entities(dofmap, u, order, range(mesh.num_vertices), range(mesh.num_edges),
                                  range(mesh.num_faces), range(mesh.num_cells))
    logger.debug(f"Interpolated {dofmap.ndof} DOFs with quadrature order {order}")
    return DofVector(values=values, dofmap=dofmap)
