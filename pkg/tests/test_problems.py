"""Tests for the manufactured solutions."""

import numpy as np
import pytest

from vem.problems import BUILTIN_PROBLEMS, get_problem


def fd_laplacian(u, points, step=1e-3):
    total = np.zeros(len(points))
    for axis in range(3):
        shift = np.zeros(3)
        shift[axis] = step
        total += (u(points + shift) - 2.0 * u(points) + u(points - shift)) / step ** 2
    return total


def fd_gradient(u, points, step=1e-6):
    columns = []
    for axis in range(3):
        shift = np.zeros(3)
        shift[axis] = step
        columns.append((u(points + shift) - u(points - shift)) / (2.0 * step))
    return np.column_stack(columns)


class TestManufacturedProblems:

    @pytest.mark.parametrize("name", sorted(BUILTIN_PROBLEMS))
    def test_load_is_negative_laplacian(self, name, rng):
        problem = get_problem(name)
        points = rng.uniform(0.1, 0.9, size=(20, 3))
        np.testing.assert_allclose(problem.f(points), -fd_laplacian(problem.u, points), rtol=1e-4, atol=1e-4)

    @pytest.mark.parametrize("name", sorted(BUILTIN_PROBLEMS))
    def test_gradient(self, name, rng):
        problem = get_problem(name)
        points = rng.uniform(0.0, 1.0, size=(20, 3))
        np.testing.assert_allclose(problem.grad(points), fd_gradient(problem.u, points), rtol=1e-6, atol=1e-7)

    def test_sine_vanishes_on_boundary(self, rng):
        problem = get_problem("sinsinsin")
        points = rng.uniform(0.0, 1.0, size=(10, 3))
        points[:, 1] = 1.0
        np.testing.assert_allclose(problem.g(points), 0.0, atol=1e-15)

    def test_polynomial_degrees(self):
        assert get_problem("poly1").degree == 1
        assert get_problem("quad").is_polynomial
        assert not get_problem("sinsinsin").is_polynomial

    def test_unknown_problem(self):
        with pytest.raises(ValueError, match="Unknown problem"):
            get_problem("cosh")
