"""Tests for global assembly, Dirichlet elimination and the matrix dump."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vem.assembly import (
    AssemblyError, ReducedSystem, apply_dirichlet, assemble, dump_matrix, kernel_dimension, solve,
)
from vem.generators import gen_cube_grid
from vem.interpolation import interpolate
from vem.mesh import PolyMesh
from vem.models import StabilizationVariant
from vem.problems import get_problem
from vem.solver import spd_check

VARIANTS = list(StabilizationVariant)


@pytest.fixture(scope="module")
def perturbed_system(perturbed2):
    """Order-2 system on the perturbed 2x2x2 grid."""
    return assemble(perturbed2, 2)


class TestAssembledMatrix:
    """Structure of the global stiffness matrix."""

    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("k", [1, 2])
    def test_symmetric(self, perturbed2, variant, k):
        system = assemble(perturbed2, k, variant)
        diff = system.matrix - system.matrix.T
        assert diff.nnz == 0 or np.abs(diff.data).max() == 0.0

    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("name", ["cube2", "slit1", "perturbed2"])
    def test_constants_in_kernel(self, test_meshes, variant, name):
        mesh = test_meshes[name]
        system = assemble(mesh, 2, variant)
        ones = interpolate(mesh, 2, lambda p: np.ones(len(p)), dofmap=system.dofmap)
        np.testing.assert_allclose(system.matrix @ ones.values, 0.0, atol=1e-10)

    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("name,k", [("cube2", 1), ("cube2", 2), ("slit1", 2)])
    def test_kernel_is_one_dimensional(self, test_meshes, variant, name, k):
        system = assemble(test_meshes[name], k, variant)
        assert kernel_dimension(system) == 1

    def test_kernel_dimension_size_limit(self, cube2):
        with pytest.raises(AssemblyError, match="limited"):
            kernel_dimension(assemble(cube2, 2), max_dofs=10)

    def test_k1_row_sums_vanish(self, cube2):
        system = assemble(cube2, 1)
        assert system.ndof == 27
        np.testing.assert_allclose(np.asarray(system.matrix.sum(axis=1)).ravel(), 0.0, atol=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2 ** 16))
    def test_equals_sum_of_local_forms(self, perturbed_system, seed):
        """
        Property: assembly consistency

        u^T A v equals the sum over cells of the local forms on the
        restricted DOF vectors.
        """
        system = perturbed_system
        rng = np.random.default_rng(seed)
        u, v = rng.standard_normal((2, system.ndof))
        expected = sum(
            u[space.layout.global_dofs] @ local.matrix @ v[space.layout.global_dofs]
            for space, local in zip(system.cells, system.local)
        )
        assert u @ (system.matrix @ v) == pytest.approx(expected, rel=1e-10, abs=1e-10)

    def test_cell_order_does_not_matter(self, cube2):
        reversed_mesh = PolyMesh(cube2.vertices, cube2.faces, cube2.cells[::-1], cube2.boundary_faces)
        a = assemble(cube2, 1).matrix.toarray()
        b = assemble(reversed_mesh, 1).matrix.toarray()
        np.testing.assert_allclose(a, b, atol=1e-13)

    def test_thread_count_does_not_change_result(self, perturbed2):
        serial = assemble(perturbed2, 2, threads=1)
        threaded = assemble(perturbed2, 2, threads=3)
        np.testing.assert_array_equal(serial.matrix.toarray(), threaded.matrix.toarray())

    def test_face_weights_only_for_boundary_stabilization(self, unit_cube):
        assert len(assemble(unit_cube, 1, StabilizationVariant.NEW).face_eps) == 6
        assert assemble(unit_cube, 1, StabilizationVariant.ORIGINAL).face_eps is None

    def test_c_eps_scales_edge_weights(self, unit_cube):
        base = assemble(unit_cube, 1, c_eps=1.0).face_eps
        doubled = assemble(unit_cube, 1, c_eps=2.0).face_eps
        np.testing.assert_allclose(doubled, 2.0 * np.asarray(base))

    def test_invalid_geometry_raises(self, unit_cube):
        vertices = np.array(unit_cube.vertices)
        vertices[np.argmax(vertices.sum(axis=1))] += [0.0, 0.0, 0.3]
        broken = PolyMesh(vertices, unit_cube.faces, unit_cube.cells, unit_cube.boundary_faces)
        with pytest.raises(AssemblyError):
            assemble(broken, 1)


class TestDirichlet:
    """Elimination of boundary DOFs."""

    def test_single_cell_has_no_free_dofs(self, unit_cube):
        reduced = apply_dirichlet(assemble(unit_cube, 1))
        assert len(reduced.free) == 0
        assert spd_check(reduced.matrix) == float("inf")

    @pytest.mark.parametrize("k", [1, 2])
    @pytest.mark.parametrize("name", ["cube2", "slit2_thin"])
    def test_reduced_matrix_is_positive_definite(self, request, name, k):
        mesh = request.getfixturevalue(name)
        reduced = apply_dirichlet(assemble(mesh, k))
        assert spd_check(reduced.matrix) > 0.0

    def test_free_and_constrained_partition(self, cube2):
        system = assemble(cube2, 2)
        reduced = apply_dirichlet(system)
        # interior: 1 vertex, 6 edges, 12 faces, 8 cells
        assert len(reduced.free) == 27
        assert len(reduced.free) + len(reduced.constrained) == system.ndof

    def test_zero_data_gives_zero_solution(self, cube2):
        system = assemble(cube2, 2)
        u_h = solve(system, apply_dirichlet(system))
        assert np.all(u_h.values == 0.0)
        assert system.stats.iterations == 0

    def test_boundary_values_are_imposed(self, cube2):
        problem = get_problem("poly1")
        system = assemble(cube2, 1, f=problem.f)
        u_h = solve(system, apply_dirichlet(system, problem.g))
        boundary = list(cube2.boundary_vertices)
        np.testing.assert_allclose(u_h.values[boundary], cube2.vertices[boundary, 0])

    def test_smooth_problem_converges_quickly(self):
        problem = get_problem("sinsinsin")
        system = assemble(gen_cube_grid(4), 1, f=problem.f)
        solve(system, apply_dirichlet(system, problem.g))
        assert system.stats.converged
        assert system.stats.iterations < 500

    @pytest.mark.parametrize("name", ["cube2", "perturbed2"])
    def test_free_dof_order_does_not_matter(self, test_meshes, rng, name):
        """
        Property: permutation invariance

        Renumbering the free DOFs of the reduced system leaves the solution
        unchanged once it is mapped back to the global numbering.
        """
        problem = get_problem("sinsinsin")
        system = assemble(test_meshes[name], 2, f=problem.f)
        reduced = apply_dirichlet(system, problem.g)
        perm = rng.permutation(len(reduced.free))
        shuffled = ReducedSystem(
            matrix=reduced.matrix[perm][:, perm].tocsr(),
            rhs=reduced.rhs[perm],
            free=reduced.free[perm],
            constrained=reduced.constrained,
            constrained_values=reduced.constrained_values,
        )
        expected = solve(system, reduced).values
        actual = solve(system, shuffled).values
        np.testing.assert_allclose(actual, expected, atol=1e-8 * np.abs(expected).max())


class TestMatrixDump:

    def test_matrix_market_header(self, unit_cube, tmp_path):
        system = assemble(unit_cube, 1)
        path = dump_matrix(system, tmp_path / "out" / "a.mtx")
        first = path.read_text().splitlines()[0]
        assert first == "%%MatrixMarket matrix coordinate real symmetric"
