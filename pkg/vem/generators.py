"""Mesh generators for the structured, slit and perturbed families.

All generators tile [0, 1]^3 with an n x n x n grid of cells and are
deterministic in their parameters. Cells are numbered with x fastest, then
y, then z.
"""

import logging
from typing import Dict, Hashable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from vem.geometry import GeometryError, PolygonGeometry, centroid_in_kernel
from vem.mesh import MeshValidationError, PolyMesh
from vem.models import MeshFamily, MeshFamilyConfig

logger = logging.getLogger(__name__)

MAX_PERTURBATION_ATTEMPTS = 10


class GeneratorError(Exception):
    """Raised when generator parameters are invalid or no valid mesh results."""
    pass


class MeshBuilder:
    """
    Incremental mesh assembly with vertex and face deduplication.

    Faces are identified by their vertex set. A face added again by a
    neighbouring cell must be a cyclic rotation of the stored loop (same
    orientation) or of its reverse (opposite orientation).
    """

    def __init__(self):
        self._vertex_ids: Dict[Hashable, int] = {}
        self._vertices: List[np.ndarray] = []
        self._face_ids: Dict[Tuple[int, ...], int] = {}
        self._faces: List[Tuple[int, ...]] = []
        self._cells: List[List[Tuple[int, int]]] = []

    def add_vertex(self, point: Sequence[float], key: Optional[Hashable] = None) -> int:
        point = np.asarray(point, dtype=float)
        if key is None:
            key = tuple(np.round(point, 12).tolist())
        vid = self._vertex_ids.get(key)
        if vid is None:
            vid = len(self._vertices)
            self._vertex_ids[key] = vid
            self._vertices.append(point)
        return vid

    def vertex(self, vid: int) -> np.ndarray:
        return self._vertices[vid]

    def add_face(self, loop: Sequence[int]) -> Tuple[int, int]:
        """Register a loop; returns (face index, orientation relative to the stored loop)."""
        loop = tuple(int(v) for v in loop)
        key = tuple(sorted(loop))
        fid = self._face_ids.get(key)
        if fid is None:
            fid = len(self._faces)
            self._face_ids[key] = fid
            self._faces.append(loop)
            return fid, 1
        stored = self._faces[fid]
        if _is_rotation(stored, loop):
            return fid, 1
        if _is_rotation(stored, tuple(reversed(loop))):
            return fid, -1
        raise GeneratorError(f"Face {loop} matches stored face {stored} in vertices but not in order")

    def add_cell(self, loops: Sequence[Sequence[int]]) -> int:
        """Add a cell whose face loops are all outward oriented."""
        self._cells.append([self.add_face(loop) for loop in loops])
        return len(self._cells) - 1

    def oriented(self, ids: Sequence[int], outward: Sequence[float]) -> List[int]:
        """Cyclic loop ``ids`` reordered so its Newell normal points along ``outward``."""
        coords = np.array([self._vertices[i] for i in ids])
        area_vector = np.cross(coords, np.roll(coords, -1, axis=0)).sum(axis=0)
        return list(ids) if area_vector @ np.asarray(outward, dtype=float) > 0 else list(reversed(ids))

    def build(self) -> PolyMesh:
        counts = np.zeros(len(self._faces), dtype=int)
        for cell in self._cells:
            for f, _ in cell:
                counts[f] += 1
        boundary = np.flatnonzero(counts == 1).tolist()
        return PolyMesh(np.array(self._vertices), self._faces, self._cells, boundary)


def _is_rotation(a: Tuple[int, ...], b: Tuple[int, ...]) -> bool:
    if len(a) != len(b):
        return False
    try:
        start = b.index(a[0])
    except ValueError:
        return False
    return b[start:] + b[:start] == a


# Corner offsets of each hexahedron face in cyclic order, with its outward axis.
HEX_FACES = (
    (((0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)), (-1, 0, 0)),
    (((1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)), (1, 0, 0)),
    (((0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)), (0, -1, 0)),
    (((0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)), (0, 1, 0)),
    (((0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)), (0, 0, -1)),
    (((0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)), (0, 0, 1)),
)


def _check_n(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise GeneratorError(f"Subdivision count must be a positive integer, got {n!r}")


def _hex_grid(n: int, displacement: np.ndarray) -> PolyMesh:
    """Hexahedral grid with lattice points moved by ``displacement`` (shape (n+1)^3 x 3)."""
    builder = MeshBuilder()
    lattice = np.empty((n + 1, n + 1, n + 1), dtype=int)
    for k in range(n + 1):
        for j in range(n + 1):
            for i in range(n + 1):
                point = np.array([i, j, k], dtype=float) / n + displacement[i, j, k]
                lattice[i, j, k] = builder.add_vertex(point, key=(i, j, k))

    for k in range(n):
        for j in range(n):
            for i in range(n):
                loops = []
                for corners, outward in HEX_FACES:
                    quad = [int(lattice[i + a, j + b, k + c]) for a, b, c in corners]
                    loops.extend(_planar_pieces(builder, builder.oriented(quad, outward)))
                builder.add_cell(loops)
    return builder.build()


def _planar_pieces(builder: MeshBuilder, quad: List[int]) -> List[List[int]]:
    """The quad itself if planar, else two triangles split through its smallest vertex id."""
    coords = np.array([builder.vertex(v) for v in quad])
    try:
        PolygonGeometry(coords)
        return [quad]
    except GeometryError:
        pass
    start = quad.index(min(quad))
    m, a, b, c = quad[start:] + quad[:start]
    return [[m, a, b], [m, b, c]]


def gen_cube_grid(n: int) -> PolyMesh:
    """n^3 axis-aligned cubes of side 1/n tiling the unit cube."""
    _check_n(n)
    mesh = _hex_grid(n, np.zeros((n + 1, n + 1, n + 1, 3)))
    logger.info(f"Generated cube grid n={n}: {mesh!r}")
    return mesh


def gen_slit_cube_grid(n: int, eps: float) -> PolyMesh:
    """
    n^3 cells, each a cube of side h = 1/n with the prism
    [0, eps h] x [0, h] x [h - eps h, h] (cell-local coordinates) removed.

    Every cell has 10 faces: the removed prism leaves strip faces of width
    eps h on the bottom, on the left and right sides and on the slit walls.
    The slit surfaces are boundary faces of the domain.
    """
    _check_n(n)
    if not (0.0 < eps < 0.5):
        raise GeneratorError(f"Slit aperture must lie in (0, 1/2), got {eps!r}")
    builder = MeshBuilder()
    gap = eps / n
    for k in range(n):
        for j in range(n):
            for i in range(n):
                x0, x1 = i / n, (i + 1) / n
                y0, y1 = j / n, (j + 1) / n
                z0, z1 = k / n, (k + 1) / n
                xe, zs = x0 + gap, z1 - gap

                def v(x, y, z):
                    return builder.add_vertex((x, y, z))

                def quad(xz_a, xz_b, outward):
                    (xa, za), (xb, zb) = xz_a, xz_b
                    ids = [v(xa, y0, za), v(xb, y0, zb), v(xb, y1, zb), v(xa, y1, za)]
                    return builder.oriented(ids, outward)

                profile = [(x0, z0), (xe, z0), (x1, z0), (x1, zs), (x1, z1), (xe, z1), (xe, zs), (x0, zs)]
                front = [v(x, y0, z) for x, z in profile]
                back = [v(x, y1, z) for x, z in reversed(profile)]
                loops = [
                    quad((x0, z0), (xe, z0), (0, 0, -1)),
                    quad((xe, z0), (x1, z0), (0, 0, -1)),
                    quad((xe, z1), (x1, z1), (0, 0, 1)),
                    quad((x0, zs), (xe, zs), (0, 0, 1)),
                    quad((xe, zs), (xe, z1), (-1, 0, 0)),
                    quad((x0, z0), (x0, zs), (-1, 0, 0)),
                    quad((x1, z0), (x1, zs), (1, 0, 0)),
                    quad((x1, zs), (x1, z1), (1, 0, 0)),
                    front,
                    back,
                ]
                builder.add_cell(loops)
    mesh = builder.build()
    logger.info(f"Generated slit grid n={n}, eps={eps}: {mesh!r}")
    return mesh


def gen_perturbed_grid(n: int, magnitude: float, seed: int) -> PolyMesh:
    """
    Cube grid with lattice points moved by magnitude * (1/n) * uniform[-1, 1]^3.

    Boundary points move only within their boundary planes. Non-planar
    quadrilaterals become two triangles. A mesh with a cell that is not
    star-shaped about its centroid is regenerated with the next sub-seed.
    """
    _check_n(n)
    if not (0.0 <= magnitude < 0.3):
        raise GeneratorError(f"Perturbation magnitude must lie in [0, 0.3), got {magnitude!r}")
    index = np.arange(n + 1)
    on_boundary = (index == 0) | (index == n)
    frozen = np.zeros((n + 1, n + 1, n + 1, 3), dtype=bool)
    frozen[on_boundary, :, :, 0] = True
    frozen[:, on_boundary, :, 1] = True
    frozen[:, :, on_boundary, 2] = True

    for attempt in range(MAX_PERTURBATION_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt])
        displacement = magnitude / n * rng.uniform(-1.0, 1.0, size=(n + 1, n + 1, n + 1, 3))
        displacement[frozen] = 0.0
        try:
            mesh = _hex_grid(n, displacement)
            _check_star_shaped(mesh)
        except (GeometryError, MeshValidationError) as e:
            logger.warning(f"Perturbed grid attempt {attempt} rejected: {e}")
            continue
        logger.info(f"Generated perturbed grid n={n}, magnitude={magnitude}, seed={seed} "
                    f"(attempt {attempt}): {mesh!r}")
        return mesh
    raise GeneratorError(f"No untangled perturbed grid after {MAX_PERTURBATION_ATTEMPTS} attempts")


def _check_star_shaped(mesh: PolyMesh) -> None:
    for c, cell in enumerate(mesh.cell_geometries):
        if not centroid_in_kernel(cell):
            raise MeshValidationError("cell star-shaped about its centroid", "cell", c)


class MeshGeneratorProtocol(Protocol):
    """Interface of a family generator."""

    def __call__(self, config: MeshFamilyConfig, n: int) -> PolyMesh:
        ...


class MeshGeneratorFactory:
    """Maps mesh families to generator callables."""

    def __init__(self):
        self._generators: Dict[MeshFamily, MeshGeneratorProtocol] = {
            MeshFamily.CUBE: lambda config, n: gen_cube_grid(n),
            MeshFamily.SLIT: lambda config, n: gen_slit_cube_grid(n, config.aperture(n)),
            MeshFamily.PERTURBED: lambda config, n: gen_perturbed_grid(n, config.magnitude, config.seed),
        }

    def create_generator(self, family: MeshFamily) -> MeshGeneratorProtocol:
        try:
            return self._generators[MeshFamily(family)]
        except (KeyError, ValueError) as e:
            raise GeneratorError(f"Unknown mesh family: {family!r}") from e

    def available_families(self) -> List[MeshFamily]:
        return list(self._generators)


# Global factory instance
_factory = MeshGeneratorFactory()


def get_mesh_generator(family: MeshFamily) -> MeshGeneratorProtocol:
    """Generator callable ``(config, n) -> PolyMesh`` for a family."""
    return _factory.create_generator(family)


def build_family_mesh(config: MeshFamilyConfig, n: int) -> PolyMesh:
    """Generate the level-``n`` mesh of a family."""
    return get_mesh_generator(config.family)(config, n)
