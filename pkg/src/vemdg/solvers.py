"""Problem-level drivers: VEM-DG, Newmark-beta and the semi-discrete eigen-expansion."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dg import SpaceTimeSolution, TimePartition, march
from .linalg import generalized_eigh
from .mesh import PolygonalMesh
from .problems import WaveProblem
from .quadrature import gauss_legendre01
from .vem import VemSpace

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


def _space(mesh_or_space, k):
    if isinstance(mesh_or_space, VemSpace):
        if k is not None and mesh_or_space.k != k:
            raise SolverError(f"space has degree {mesh_or_space.k}, requested {k}")
        return mesh_or_space
    if isinstance(mesh_or_space, PolygonalMesh):
        return VemSpace(mesh_or_space, k)
    raise TypeError("expected a PolygonalMesh or VemSpace")


def initial_data(problem: WaveProblem, space: VemSpace):
    return space.interpolate(problem.u0), space.interpolate(problem.z0)


def solve_vemdg(problem: WaveProblem, mesh, k: int | None, partition: TimePartition,
                **kwargs) -> SpaceTimeSolution:
    """VEM in space, DG in time; ``mesh`` may be a prebuilt VemSpace."""
    space = _space(mesh, k)
    if abs(partition.T - problem.T) > 1e-12 * problem.T:
        raise SolverError(f"partition ends at {partition.T}, problem at {problem.T}")
    U0, Z0 = initial_data(problem, space)
    return march(space, partition, problem.nu, problem.f, U0, Z0, **kwargs)


def evaluate(solution: SpaceTimeSolution, x, t: float) -> float:
    return solution.evaluate(x, t)


@dataclass
class NewmarkTrajectory:
    times: np.ndarray
    U: np.ndarray  # (n_steps+1, N_h)
    V: np.ndarray
    Acc: np.ndarray
    space: object = None

    def value(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise SolverError(f"time {t} is not a Newmark step")
        return self.U[i]

    def history(self, x, times=None) -> np.ndarray:
        e = self.space.point_evaluator(x)
        if times is None:
            return self.U @ e
        return np.array([e @ self.value(t) for t in times])


def newmark(M, K, load, U0, V0, dt: float, n_steps: int, nu: float = 0.0,
            beta: float = 0.25, gamma: float = 0.5) -> NewmarkTrajectory:
    """Newmark-beta for M U'' + nu M U' + K U = load(t), acceleration form."""
    if dt <= 0:
        raise SolverError("time step must be positive")
    M = sp.csc_matrix(M)
    K = sp.csc_matrix(K)
    C = nu * M
    n = M.shape[0]
    U = np.zeros((n_steps + 1, n))
    V = np.zeros_like(U)
    Acc = np.zeros_like(U)
    U[0], V[0] = U0, V0
    times = np.arange(n_steps + 1) * dt
    F0 = load(0.0)
    if n:
        Acc[0] = spla.splu(M).solve(F0 - C @ V0 - K @ U0)
        lu = spla.splu((M + gamma * dt * C + beta * dt**2 * K).tocsc())
    for i in range(n_steps):
        if not n:
            break
        u_pred = U[i] + dt * V[i] + (0.5 - beta) * dt**2 * Acc[i]
        v_pred = V[i] + (1 - gamma) * dt * Acc[i]
        a = lu.solve(load(times[i + 1]) - C @ v_pred - K @ u_pred)
        Acc[i + 1] = a
        U[i + 1] = u_pred + beta * dt**2 * a
        V[i + 1] = v_pred + gamma * dt * a
    return NewmarkTrajectory(times, U, V, Acc)


def solve_newmark(problem: WaveProblem, mesh, k: int | None, dt: float,
                  beta: float = 0.25, gamma: float = 0.5) -> NewmarkTrajectory:
    space = _space(mesh, k)
    n_steps = int(round(problem.T / dt))
    if abs(n_steps * dt - problem.T) > 1e-9 * problem.T:
        raise SolverError(f"T={problem.T} is not a multiple of dt={dt}")
    U0, Z0 = initial_data(problem, space)
    if problem.f is None:
        load = lambda t: np.zeros(space.n_free)  # noqa: E731
    else:
        load = lambda t: space.project_load(problem.f, t)  # noqa: E731
    traj = newmark(space.M, space.A, load, U0, Z0, dt, n_steps, problem.nu, beta, gamma)
    traj.space = space
    return traj


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    modes: np.ndarray  # M-orthonormal columns
    nu: float

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues - self.nu**2 / 4)

    @classmethod
    def of(cls, space: VemSpace, nu: float) -> "SpectralDecomposition":
        lam, W = generalized_eigh(space.A, space.M)
        if lam.size and lam[0] <= nu**2 / 4:
            raise SolverError(
                f"dissipation too large for the eigen-expansion: lambda_1 = {lam[0]:.4g} "
                f"<= nu^2/4 = {nu**2 / 4:.4g} (frequencies would be imaginary)")
        return cls(lam, W, nu)


def _duhamel_nodes(t: float, omega_max: float, panels_per_period: int = 2, n_gauss: int = 10):
    if t <= 0:
        return np.zeros(0), np.zeros(0)
    period = 2 * np.pi / omega_max
    n_panels = max(1, int(np.ceil(t / period * panels_per_period)))
    s, w = gauss_legendre01(n_gauss)
    edges = np.linspace(0.0, t, n_panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + s[None, :] * h[:, None]).ravel()
    weights = (w[None, :] * h[:, None]).ravel()
    return nodes, weights


def spectral_semidiscrete(problem: WaveProblem, mesh, k: int | None, eval_times,
                          decomposition: SpectralDecomposition | None = None,
                          panels_per_period: int = 2, n_gauss: int = 10):
    """Exact semi-discrete trajectories via the M-orthonormal eigenbasis.

    Returns (U, U', U'') with one row per time in ``eval_times``.  The
    acceleration is obtained from the differentiated Duhamel kernel, not
    from the ODE, so it can serve as an independent residual check.
    """
    space = _space(mesh, k)
    dec = decomposition or SpectralDecomposition.of(space, problem.nu)
    nu = problem.nu
    lam, W, om = dec.eigenvalues, dec.modes, dec.frequencies
    U0, Z0 = initial_data(problem, space)
    c = W.T @ (space.M @ U0)
    d = W.T @ (space.M @ Z0)
    b = (d + 0.5 * nu * c) / om
    out = []
    for t in np.atleast_1d(eval_times):
        e = np.exp(-0.5 * nu * t)
        cs, sn = np.cos(om * t), np.sin(om * t)
        g = e * (c * cs + b * sn)
        g1 = e * (-0.5 * nu * (c * cs + b * sn) + om * (-c * sn + b * cs))
        g2 = -0.5 * nu * g1 + e * om * (-0.5 * nu * (-c * sn + b * cs) - om * (c * cs + b * sn))
        if problem.f is not None and t > 0:
            s, w = _duhamel_nodes(t, om.max(), panels_per_period, n_gauss)
            phi = W.T @ space.load_matrix(problem.f, s)  # (modes, nodes)
            tau = t - s
            ee = np.exp(-0.5 * nu * tau)[None, :]
            cw = np.cos(np.outer(om, tau))
            sw = np.sin(np.outer(om, tau))
            k0 = ee * sw / om[:, None]
            k1 = ee * (cw - (0.5 * nu / om)[:, None] * sw)
            k2 = ee * (((0.25 * nu**2 / om) - om)[:, None] * sw - nu * cw)
            phi_t = W.T @ space.project_load(problem.f, t)
            g = g + (k0 * phi) @ w
            g1 = g1 + (k1 * phi) @ w
            g2 = g2 + phi_t + (k2 * phi) @ w
        out.append((W @ g, W @ g1, W @ g2))
    U, V, Acc = (np.array(a) for a in zip(*out))
    return U, V, Acc


def spectral_state(problem: WaveProblem, space: VemSpace, decomposition=None):
    """state(times) -> (U, U') from the eigen-expansion, for history norms."""
    dec = decomposition or SpectralDecomposition.of(space, problem.nu)

    def state(times):
        U, V, _ = spectral_semidiscrete(problem, space, None, times, dec)
        return U, V

    return state
