"""Polyhedral mesh data model, text format and validation.

File format (``polymesh 1``)::

    polymesh 1
    vertices N
    x y z                      (N lines)
    faces M
    count v1 ... vcount        (M lines, counter-clockwise about the face normal)
    cells P
    count +-f1 ... +-fcount    (P lines, sign = orientation, outward positive)
    boundary B
    f1 f2 ...                  (B face indices, any line layout)

Indices are 0-based. A face used inward carries a leading ``-`` even when
its index is 0 (``-0``). Blank lines and ``#`` comments are ignored.
"""

import hashlib
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from vem.geometry import (
    GeometryError, GeomMetrics, PolygonGeometry, PolyhedronGeometry, chunkiness,
)

logger = logging.getLogger(__name__)

VOLUME_TOLERANCE = 1e-10


class MeshParseError(Exception):
    """Raised when a mesh file does not follow the polymesh format."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MeshValidationError(Exception):
    """Raised when a mesh violates a structural or geometric invariant."""

    def __init__(self, invariant: str, entity: str, index: int, detail: str = ""):
        self.invariant = invariant
        self.entity = entity
        self.index = index
        message = f"{invariant} violated at {entity} {index}"
        super().__init__(f"{message}: {detail}" if detail else message)


@dataclass(frozen=True)
class MeshReport:
    """Summary produced by a successful validation."""
    num_vertices: int
    num_edges: int
    num_faces: int
    num_cells: int
    num_boundary_faces: int
    total_volume: float
    max_faces_per_cell: int
    min_rho_F: float
    min_rho_K: float


class PolyMesh:
    """
    Immutable polyhedral partition of a domain.

    Edges are derived from the face loops, numbered in order of first
    appearance and oriented from the smaller to the larger vertex index.
    Geometry is computed lazily and cached.
    """

    def __init__(self, vertices: np.ndarray, faces: Sequence[Sequence[int]],
                 cells: Sequence[Sequence[Tuple[int, int]]], boundary_faces: Sequence[int]):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        self.vertices.setflags(write=False)
        self.faces: Tuple[Tuple[int, ...], ...] = tuple(tuple(int(v) for v in f) for f in faces)
        self.cells: Tuple[Tuple[Tuple[int, int], ...], ...] = tuple(
            tuple((int(f), 1 if s > 0 else -1) for f, s in c) for c in cells
        )
        self.boundary_faces: Tuple[int, ...] = tuple(sorted(set(int(f) for f in boundary_faces)))

        edge_index: Dict[Tuple[int, int], int] = {}
        face_edges: List[Tuple[int, ...]] = []
        for loop in self.faces:
            ids = []
            for a, b in zip(loop, loop[1:] + loop[:1]):
                key = (min(a, b), max(a, b))
                if key not in edge_index:
                    edge_index[key] = len(edge_index)
                ids.append(edge_index[key])
            face_edges.append(tuple(ids))
        self.edges: Tuple[Tuple[int, int], ...] = tuple(edge_index)
        self.edge_index = edge_index
        self.face_edges: Tuple[Tuple[int, ...], ...] = tuple(face_edges)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def face_coords(self, face: int) -> np.ndarray:
        return self.vertices[list(self.faces[face])]

    @cached_property
    def face_geometries(self) -> List[PolygonGeometry]:
        return [PolygonGeometry(self.face_coords(f)) for f in range(self.num_faces)]

    @cached_property
    def cell_geometries(self) -> List[PolyhedronGeometry]:
        return [
            PolyhedronGeometry([self.face_geometries[f] for f, _ in cell], [s for _, s in cell])
            for cell in self.cells
        ]

    def face_geometry(self, face: int) -> PolygonGeometry:
        return self.face_geometries[face]

    def cell_geometry(self, cell: int) -> PolyhedronGeometry:
        return self.cell_geometries[cell]

    def edge_length(self, edge: int) -> float:
        a, b = self.edges[edge]
        return float(np.linalg.norm(self.vertices[b] - self.vertices[a]))

    def cell_vertices(self, cell: int) -> List[int]:
        """Vertices of a cell in ascending index order."""
        return sorted({v for f, _ in self.cells[cell] for v in self.faces[f]})

    def cell_edges(self, cell: int) -> List[int]:
        """Edges of a cell in ascending index order."""
        return sorted({e for f, _ in self.cells[cell] for e in self.face_edges[f]})

    @cached_property
    def face_cells(self) -> Tuple[Tuple[Tuple[int, int], ...], ...]:
        """(cell, sign) pairs incident to every face."""
        incidence: Dict[int, List[Tuple[int, int]]] = defaultdict(list)
        for c, cell in enumerate(self.cells):
            for f, s in cell:
                incidence[f].append((c, s))
        return tuple(tuple(incidence.get(f, ())) for f in range(self.num_faces))

    @cached_property
    def boundary_vertices(self) -> Tuple[int, ...]:
        return tuple(sorted({v for f in self.boundary_faces for v in self.faces[f]}))

    @cached_property
    def boundary_edges(self) -> Tuple[int, ...]:
        return tuple(sorted({e for f in self.boundary_faces for e in self.face_edges[f]}))

    def cell_diameters(self) -> np.ndarray:
        return np.array([g.diameter for g in self.cell_geometries])

    @property
    def h_max(self) -> float:
        return float(self.cell_diameters().max())

    def face_metrics(self, c_eps: float = 1.0) -> List[GeomMetrics]:
        """Per-face metrics with the stabilization weight eps_F = c_eps * rho_F."""
        metrics = []
        for face in self.face_geometries:
            rho = chunkiness(face).rho
            metrics.append(GeomMetrics(diameter=face.diameter, measure=face.area,
                                       centroid=face.centroid, rho=rho, eps_weight=c_eps * rho))
        return metrics

    def cell_metrics(self) -> List[GeomMetrics]:
        return [
            GeomMetrics(diameter=cell.diameter, measure=cell.volume,
                        centroid=cell.centroid, rho=chunkiness(cell).rho)
            for cell in self.cell_geometries
        ]

    def validate(self) -> MeshReport:
        """Check every mesh invariant; raises MeshValidationError on the first violation."""
        return validate_mesh(self)

    def to_text(self) -> str:
        return format_mesh(self)

    def content_hash(self) -> str:
        """SHA-256 of the canonical file text."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def __repr__(self) -> str:
        return (f"PolyMesh(vertices={self.num_vertices}, edges={self.num_edges}, "
                f"faces={self.num_faces}, cells={self.num_cells})")


def validate_mesh(mesh: PolyMesh) -> MeshReport:
    nv = mesh.num_vertices
    if not np.all(np.isfinite(mesh.vertices)):
        bad = int(np.argwhere(~np.isfinite(mesh.vertices))[0, 0])
        raise MeshValidationError("finite coordinates", "vertex", bad)

    for f, loop in enumerate(mesh.faces):
        if len(loop) < 3:
            raise MeshValidationError("face has at least 3 vertices", "face", f)
        if len(set(loop)) != len(loop):
            raise MeshValidationError("face vertices are distinct", "face", f)
        if any(v < 0 or v >= nv for v in loop):
            raise MeshValidationError("vertex index in range", "face", f)

    for c, cell in enumerate(mesh.cells):
        if len(cell) < 4:
            raise MeshValidationError("cell has at least 4 faces", "cell", c)
        ids = [f for f, _ in cell]
        if any(f < 0 or f >= mesh.num_faces for f in ids):
            raise MeshValidationError("face index in range", "cell", c)
        if len(set(ids)) != len(ids):
            raise MeshValidationError("cell faces are distinct", "cell", c)

    for f in mesh.boundary_faces:
        if f < 0 or f >= mesh.num_faces:
            raise MeshValidationError("boundary face index in range", "face", f)

    for f in range(mesh.num_faces):
        try:
            mesh.face_geometry(f)
        except GeometryError as e:
            raise MeshValidationError("valid planar face", "face", f, str(e)) from e

    for c, cell in enumerate(mesh.cells):
        _check_cell_closure(mesh, c)
        try:
            mesh.cell_geometry(c)
        except GeometryError as e:
            raise MeshValidationError("closed outward cell boundary", "cell", c, str(e)) from e

    boundary = set(mesh.boundary_faces)
    for f, incident in enumerate(mesh.face_cells):
        if len(incident) == 0:
            raise MeshValidationError("face belongs to a cell", "face", f)
        if len(incident) > 2:
            raise MeshValidationError("face shared by at most 2 cells", "face", f)
        if len(incident) == 2:
            if f in boundary:
                raise MeshValidationError("boundary face has one cell", "face", f)
            if incident[0][1] == incident[1][1]:
                raise MeshValidationError("opposite orientation on shared faces", "face", f)
        elif f not in boundary:
            raise MeshValidationError("face with one cell is on the boundary", "face", f)

    volumes = np.array([g.volume for g in mesh.cell_geometries])
    total = float(volumes.sum())
    # domain volume from the boundary surface
    domain = 0.0
    for f in mesh.boundary_faces:
        (c, s), = mesh.face_cells[f]
        face = mesh.face_geometry(f)
        domain += s * face.area * (face.centroid @ face.frame.normal) / 3.0
    if abs(total - domain) > VOLUME_TOLERANCE * abs(domain):
        raise MeshValidationError("cell volumes sum to the domain volume", "mesh", 0,
                                  f"{total!r} != {domain!r}")

    rho_f = _min_kernel_radius(mesh.face_geometries, "face")
    rho_k = _min_kernel_radius(mesh.cell_geometries, "cell")
    max_faces = max(len(cell) for cell in mesh.cells)
    report = MeshReport(
        num_vertices=nv, num_edges=mesh.num_edges, num_faces=mesh.num_faces,
        num_cells=mesh.num_cells, num_boundary_faces=len(boundary), total_volume=total,
        max_faces_per_cell=max_faces, min_rho_F=rho_f, min_rho_K=rho_k,
    )
    logger.debug(f"Validated {mesh!r}: max faces per cell {max_faces}, volume {total:.12g}")
    return report


def _min_kernel_radius(shapes, entity: str) -> float:
    """Smallest rho over the shapes; each must have a kernel with interior."""
    rho = np.inf
    for index, shape in enumerate(shapes):
        result = chunkiness(shape)
        if not result.star_shaped:
            raise MeshValidationError(f"star-shaped {entity}", entity, index,
                                      "kernel has empty interior")
        rho = min(rho, result.rho)
    return float(rho)


def _check_cell_closure(mesh: PolyMesh, c: int) -> None:
    """Every cell edge is traversed exactly twice, once in each direction."""
    directed: Counter = Counter()
    for f, s in mesh.cells[c]:
        loop = mesh.faces[f] if s > 0 else tuple(reversed(mesh.faces[f]))
        for a, b in zip(loop, loop[1:] + loop[:1]):
            directed[(a, b)] += 1
    for (a, b), count in directed.items():
        if count != 1 or directed.get((b, a), 0) != 1:
            raise MeshValidationError("closed consistently oriented cell boundary", "cell", c,
                                      f"edge ({a}, {b}) used {count} times, reverse "
                                      f"{directed.get((b, a), 0)} times")


def _tokens(text: str) -> Iterator[Tuple[int, List[str]]]:
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line.split()


def _parse_int(token: str, line: int) -> int:
    try:
        return int(token)
    except ValueError as e:
        raise MeshParseError(f"expected an integer, got {token!r}", line) from e


def _parse_signed_face(token: str, line: int) -> Tuple[int, int]:
    sign = -1 if token.startswith("-") else 1
    body = token[1:] if token[:1] in "+-" else token
    if not body.isdigit():
        raise MeshParseError(f"expected a signed face index, got {token!r}", line)
    return int(body), sign


def parse_mesh(text: str) -> PolyMesh:
    """Parse polymesh text without validating geometry."""
    lines = list(_tokens(text))
    cursor = 0

    def take(expected: Optional[str] = None) -> Tuple[int, List[str]]:
        nonlocal cursor
        if cursor >= len(lines):
            raise MeshParseError(f"unexpected end of file, expected {expected or 'data'}")
        item = lines[cursor]
        cursor += 1
        return item

    def section(name: str) -> int:
        number, tokens = take(f"'{name}' section")
        if len(tokens) != 2 or tokens[0] != name:
            raise MeshParseError(f"expected '{name} <count>', got {' '.join(tokens)!r}", number)
        count = _parse_int(tokens[1], number)
        if count < 0:
            raise MeshParseError(f"negative {name} count", number)
        return count

    number, header = take("header")
    if header != ["polymesh", "1"]:
        raise MeshParseError("missing 'polymesh 1' header", number)

    vertices = []
    for _ in range(section("vertices")):
        number, tokens = take("vertex coordinates")
        if len(tokens) != 3:
            raise MeshParseError("a vertex needs 3 coordinates", number)
        try:
            vertices.append([float(t) for t in tokens])
        except ValueError as e:
            raise MeshParseError(f"bad coordinate in {' '.join(tokens)!r}", number) from e

    faces = []
    for _ in range(section("faces")):
        number, tokens = take("face")
        count = _parse_int(tokens[0], number)
        if count != len(tokens) - 1:
            raise MeshParseError(f"face declares {count} vertices but lists {len(tokens) - 1}", number)
        faces.append([_parse_int(t, number) for t in tokens[1:]])

    cells = []
    for _ in range(section("cells")):
        number, tokens = take("cell")
        count = _parse_int(tokens[0], number)
        if count != len(tokens) - 1:
            raise MeshParseError(f"cell declares {count} faces but lists {len(tokens) - 1}", number)
        cells.append([_parse_signed_face(t, number) for t in tokens[1:]])

    nboundary = section("boundary")
    boundary: List[int] = []
    while len(boundary) < nboundary:
        number, tokens = take("boundary face indices")
        boundary.extend(_parse_int(t, number) for t in tokens)
    if len(boundary) != nboundary:
        raise MeshParseError(f"boundary section lists {len(boundary)} faces, expected {nboundary}", number)
    if cursor < len(lines):
        raise MeshParseError("trailing content after boundary section", lines[cursor][0])

    return PolyMesh(np.array(vertices, dtype=float).reshape(-1, 3), faces,
                    [[(f, s) for f, s in cell] for cell in cells], boundary)


def format_mesh(mesh: PolyMesh) -> str:
    """Canonical polymesh text with full double precision."""
    out = ["polymesh 1", f"vertices {mesh.num_vertices}"]
    out.extend(" ".join(format(float(x), ".17g") for x in v) for v in mesh.vertices)
    out.append(f"faces {mesh.num_faces}")
    out.extend(" ".join(str(x) for x in (len(f),) + f) for f in mesh.faces)
    out.append(f"cells {mesh.num_cells}")
    for cell in mesh.cells:
        tokens = [str(len(cell))] + [("-" if s < 0 else "") + str(f) for f, s in cell]
        out.append(" ".join(tokens))
    out.append(f"boundary {len(mesh.boundary_faces)}")
    if mesh.boundary_faces:
        out.append(" ".join(str(f) for f in mesh.boundary_faces))
    return "\n".join(out) + "\n"


def load_mesh(path: Union[str, Path]) -> PolyMesh:
    """Read and validate a mesh file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise MeshParseError(f"cannot read {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise MeshParseError(f"{path} is not UTF-8 text: {e.reason} at byte {e.start}") from e
    mesh = parse_mesh(text)
    report = mesh.validate()
    logger.info(f"Loaded {path}: {report.num_cells} cells, {report.num_faces} faces")
    return mesh


def save_mesh(mesh: PolyMesh, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_mesh(mesh), encoding="utf-8")
    logger.info(f"Wrote mesh to {path}")
    return path
