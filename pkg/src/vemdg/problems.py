"""Problem definitions for u_tt + nu u_t - Laplace(u) = f with u = 0 on the box boundary."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import UNIT_BOX

Field = Callable  # g(x, y) on arrays
Load = Callable  # f(x, y, t) on arrays


def _zero(x, y, *args):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class WaveProblem:
    """Data of the damped wave equation; ``exact``/``exact_t`` are u(x, y, t) and u_t when known."""

    nu: float
    T: float
    f: Optional[Load] = None
    u0: Field = _zero
    z0: Field = _zero
    box: tuple = UNIT_BOX
    exact: Optional[Callable] = None
    exact_t: Optional[Callable] = None
    exact_grad: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("final time T must be positive")
        if self.nu < 0:
            raise ValueError("dissipation nu must be non-negative")


def zero_problem(nu: float = 1.0, T: float = 1.0) -> WaveProblem:
    return WaveProblem(nu, T, None, name="zero",
                       exact=lambda x, y, t: _zero(x, y), exact_t=lambda x, y, t: _zero(x, y))


def manufactured(nu: float = 1.0, T: float = 1.0) -> WaveProblem:
    """u = sin(t^2) sin(pi x) sin(pi y)."""
    pi = np.pi

    def S(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def f(x, y, t):
        amp = (2 * np.cos(t**2) - 4 * t**2 * np.sin(t**2) + nu * 2 * t * np.cos(t**2)
               + 2 * pi**2 * np.sin(t**2))
        return amp * S(x, y)

    def u(x, y, t):
        return np.sin(t**2) * S(x, y)

    def ut(x, y, t):
        return 2 * t * np.cos(t**2) * S(x, y)

    def grad(x, y, t):
        a = np.sin(t**2) * pi
        return a * np.cos(pi * x) * np.sin(pi * y), a * np.sin(pi * x) * np.cos(pi * y)

    return WaveProblem(nu, T, f, lambda x, y: u(x, y, 0.0), lambda x, y: ut(x, y, 0.0),
                       exact=u, exact_t=ut, exact_grad=grad, name="manufactured")


def polynomial_patch(nu: float = 1.0, T: float = 1.0) -> WaveProblem:
    """u = x(1-x) y(1-y) t^2, in P_4 x P_2."""

    def P(x, y):
        return x * (1 - x) * y * (1 - y)

    def lapP(x, y):
        return -2 * y * (1 - y) - 2 * x * (1 - x)

    def f(x, y, t):
        return 2 * P(x, y) + nu * 2 * t * P(x, y) - t**2 * lapP(x, y)

    return WaveProblem(nu, T, f, _zero, _zero,
                       exact=lambda x, y, t: t**2 * P(x, y),
                       exact_t=lambda x, y, t: 2 * t * P(x, y), name="patch")


def impulse(nu: float = 0.0, T: float = 1.0, x0=(0.05, 0.05), s: float = 0.025,
            amplitude: float = 100.0, onset: float = 0.1) -> WaveProblem:
    """Smooth spatial impulse switched on at t = onset, zero initial data."""
    cx, cy = x0

    def f(x, y, t):
        if t < onset:
            return _zero(x, y)
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        return amplitude * np.exp(-(r2**2) / s**2)

    return WaveProblem(nu, T, f, name="impulse")


def oracle_problem(nu: float = 0.5, T: float = 1.0) -> WaveProblem:
    """Smooth load vanishing at t = 0 with non-trivial initial data."""

    def f(x, y, t):
        return np.sin(2 * t) * np.exp(x - y) * (1 + x * y)

    return WaveProblem(nu, T, f,
                       u0=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
                       z0=lambda x, y: 4 * x * (1 - x) * y * (1 - y),
                       name="oracle")


PROBLEMS = {
    "manufactured": manufactured,
    "patch": polynomial_patch,
    "impulse": impulse,
    "zero": zero_problem,
    "oracle": oracle_problem,
}
