"""Tests for scaled monomial bases and exact polynomial re-expansion."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vem.monomials import (
    ScaledMonomialBasis, basis_size, edge_basis, interval_mass, interval_moments,
    mass_matrix, multi_indices, restriction_matrix,
)
from vem.quadrature import tetrahedron_rule


class TestMultiIndices:
    """Graded ordering of monomial exponents."""

    @given(dim=st.integers(min_value=1, max_value=3), degree=st.integers(min_value=1, max_value=5))
    def test_prefix_consistency(self, dim, degree):
        """
        Property: prefix consistency

        The degree-(p-1) basis is a prefix of the degree-p basis.
        """
        low = multi_indices(dim, degree - 1)
        assert multi_indices(dim, degree)[:len(low)] == low
        assert len(low) == basis_size(dim, degree - 1)

    @pytest.mark.parametrize("dim,degree,expected", [(2, 0, 1), (2, 1, 3), (2, 2, 6), (3, 1, 4), (3, 2, 10), (3, 3, 20)])
    def test_basis_size(self, dim, degree, expected):
        assert basis_size(dim, degree) == expected

    def test_negative_degree_is_empty(self):
        assert basis_size(3, -1) == 0
        assert basis_size(2, -1) == 0

    def test_degrees_are_graded(self):
        degrees = [sum(a) for a in multi_indices(3, 3)]
        assert degrees == sorted(degrees)


class TestScaledMonomialBasis:
    """Evaluation and derivatives of scaled monomials."""

    def test_constant_at_center(self):
        basis = ScaledMonomialBasis(3, 2, [0.3, 0.1, -0.2], 0.5)
        values = basis.evaluate(np.array([[0.3, 0.1, -0.2]]))[0]
        assert values[0] == 1.0
        assert np.all(values[1:] == 0.0)

    def test_scaling(self):
        basis = ScaledMonomialBasis(2, 1, [1.0, 2.0], 4.0)
        values = basis.evaluate(np.array([[3.0, 0.0]]))[0]
        np.testing.assert_allclose(values, [1.0, 0.5, -0.5])

    def test_gradient_matches_finite_differences(self, rng):
        basis = ScaledMonomialBasis(3, 3, [0.2, 0.4, 0.1], 0.7)
        point = rng.uniform(-1, 1, size=(1, 3))
        grad = basis.gradient(point)[0]
        step = 1e-6
        for axis in range(3):
            shift = np.zeros((1, 3))
            shift[0, axis] = step
            fd = (basis.evaluate(point + shift) - basis.evaluate(point - shift))[0] / (2 * step)
            np.testing.assert_allclose(grad[:, axis], fd, rtol=1e-6, atol=1e-8)

    def test_derivative_matrix_acts_on_coefficients(self, rng):
        basis = ScaledMonomialBasis(3, 2, [0.0, 0.0, 0.0], 2.0)
        coeffs = rng.standard_normal(basis.size)
        points = rng.uniform(-1, 1, size=(5, 3))
        for axis in range(3):
            derived = basis.evaluate(points) @ (basis.derivative_matrix(axis) @ coeffs)
            direct = basis.gradient(points)[:, :, axis] @ coeffs
            np.testing.assert_allclose(derived, direct, atol=1e-12)

    def test_laplacian_of_quadratic(self):
        basis = ScaledMonomialBasis(3, 2, [0.0, 0.0, 0.0], 1.0)
        coeffs = np.zeros(basis.size)
        coeffs[multi_indices(3, 2).index((2, 0, 0))] = 1.0
        coeffs[multi_indices(3, 2).index((0, 0, 2))] = 1.0
        lap = basis.laplacian_matrix() @ coeffs
        assert lap[0] == pytest.approx(4.0)
        assert np.allclose(lap[1:], 0.0)


class TestRestriction:
    """Re-expansion of polynomials on affine subspaces."""

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000), degree=st.integers(min_value=0, max_value=3),
           target_dim=st.integers(min_value=1, max_value=2))
    def test_restriction_reproduces_values(self, seed, degree, target_dim):
        """
        Property: exact re-expansion

        A source polynomial evaluated on origin + axes y equals the
        re-expanded target polynomial evaluated at y.
        """
        rng = np.random.default_rng(seed)
        source = ScaledMonomialBasis(3, degree, rng.uniform(-1, 1, 3), rng.uniform(0.5, 2.0))
        target = ScaledMonomialBasis(target_dim, degree, rng.uniform(-1, 1, target_dim), rng.uniform(0.5, 2.0))
        origin = rng.uniform(-1, 1, 3)
        axes = rng.uniform(-1, 1, (3, target_dim))
        r = restriction_matrix(source, origin, axes, target)
        y = rng.uniform(-1, 1, (6, target_dim))
        np.testing.assert_allclose(target.evaluate(y) @ r, source.evaluate(origin + y @ axes.T),
                                   rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("target_dim", [1, 2, 3])
    def test_constant_source(self, target_dim):
        source = ScaledMonomialBasis(3, 0, [0.3, -0.2, 0.1], 0.7)
        target = ScaledMonomialBasis(target_dim, 0, np.zeros(target_dim), 1.0)
        r = restriction_matrix(source, [1.0, 2.0, 3.0], np.eye(3)[:, :target_dim], target)
        np.testing.assert_allclose(r, [[1.0]])

    def test_lower_target_degree_rejected(self):
        source = ScaledMonomialBasis(3, 2, [0, 0, 0], 1.0)
        with pytest.raises(ValueError):
            restriction_matrix(source, [0, 0, 0], np.eye(3)[:, :2], ScaledMonomialBasis(2, 1, [0, 0], 1.0))


class TestIntervalIntegrals:
    """Edge parameter integrals on [-1/2, 1/2]."""

    def test_moments(self):
        np.testing.assert_allclose(interval_moments(4), [1.0, 0.0, 1.0 / 12.0, 0.0, 1.0 / 80.0])

    def test_mass_is_gram_of_edge_basis(self):
        t, w = np.polynomial.legendre.leggauss(6)
        values = edge_basis(3).evaluate(0.5 * t)
        np.testing.assert_allclose(interval_mass(3, 3), values.T @ (0.5 * w[:, None] * values), atol=1e-14)

    def test_negative_degree_gives_empty_block(self):
        assert interval_mass(-1, 2).shape == (0, 3)


class TestMassMatrix:
    """Gram matrices from monomial integral tables."""

    def test_unit_tetrahedron_mass(self):
        basis = ScaledMonomialBasis(3, 1, [0.0, 0.0, 0.0], 1.0)
        points, weights = tetrahedron_rule(4)
        moments = ScaledMonomialBasis(3, 2, [0.0, 0.0, 0.0], 1.0).evaluate(points).T @ weights
        values = basis.evaluate(points)
        np.testing.assert_allclose(mass_matrix(moments, 3, 1), values.T @ (weights[:, None] * values), atol=1e-14)

    def test_too_few_moments_rejected(self):
        with pytest.raises(ValueError):
            mass_matrix(np.ones(4), 3, 1)
