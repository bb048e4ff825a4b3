"""Manufactured solutions of -Laplace(u) = f on the unit cube."""

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ManufacturedProblem:
    """Closed-form solution with its gradient and load; g = u on the boundary."""
    name: str
    u: Field
    grad: Field
    f: Field
    degree: Optional[int]
    description: str = ""

    @property
    def is_polynomial(self) -> bool:
        return self.degree is not None

    def g(self, points: np.ndarray) -> np.ndarray:
        return self.u(points)


def _xyz(points: np.ndarray):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return points[:, 0], points[:, 1], points[:, 2]


def _poly1_u(p):
    x, _, _ = _xyz(p)
    return x.copy()


def _poly1_grad(p):
    x, _, _ = _xyz(p)
    return np.column_stack([np.ones_like(x), np.zeros_like(x), np.zeros_like(x)])


def _poly2_u(p):
    x, y, _ = _xyz(p)
    return x ** 2 - y ** 2


def _poly2_grad(p):
    x, y, _ = _xyz(p)
    return np.column_stack([2 * x, -2 * y, np.zeros_like(x)])


def _quad_u(p):
    x, y, z = _xyz(p)
    return x ** 2 + y * z


def _quad_grad(p):
    x, y, z = _xyz(p)
    return np.column_stack([2 * x, z, y])


def _poly3_u(p):
    x, y, z = _xyz(p)
    return x ** 2 * y + z ** 3


def _poly3_grad(p):
    x, y, z = _xyz(p)
    return np.column_stack([2 * x * y, x ** 2, 3 * z ** 2])


def _poly3_f(p):
    _, y, z = _xyz(p)
    return -2 * y - 6 * z


def _sin_u(p):
    x, y, z = _xyz(p)
    return np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z)


def _sin_grad(p):
    x, y, z = _xyz(p)
    sx, sy, sz = np.sin(np.pi * x), np.sin(np.pi * y), np.sin(np.pi * z)
    cx, cy, cz = np.cos(np.pi * x), np.cos(np.pi * y), np.cos(np.pi * z)
    return np.pi * np.column_stack([cx * sy * sz, sx * cy * sz, sx * sy * cz])


def _sin_f(p):
    return 3 * np.pi ** 2 * _sin_u(p)


def _zero(p):
    return np.zeros(len(np.asarray(p).reshape(-1, 3)))


def _constant(value: float) -> Field:
    def f(p):
        return np.full(len(np.asarray(p).reshape(-1, 3)), value)
    return f


BUILTIN_PROBLEMS: Dict[str, ManufacturedProblem] = {
    "poly1": ManufacturedProblem("poly1", _poly1_u, _poly1_grad, _zero, 1, "u = x"),
    "poly2": ManufacturedProblem("poly2", _poly2_u, _poly2_grad, _zero, 2, "u = x^2 - y^2"),
    "quad": ManufacturedProblem("quad", _quad_u, _quad_grad, _constant(-2.0), 2, "u = x^2 + y z"),
    "poly3": ManufacturedProblem("poly3", _poly3_u, _poly3_grad, _poly3_f, 3, "u = x^2 y + z^3"),
    "sinsinsin": ManufacturedProblem("sinsinsin", _sin_u, _sin_grad, _sin_f, None,
                                     "u = sin(pi x) sin(pi y) sin(pi z)"),
}


def get_problem(name: str) -> ManufacturedProblem:
    try:
        return BUILTIN_PROBLEMS[name]
    except KeyError:
        raise ValueError(f"Unknown problem {name!r}; choose from {', '.join(sorted(BUILTIN_PROBLEMS))}")
