"""Energy and triple norms, the space-time bilinear form, errors and rate fits.

A "trajectory" is anything exposing ``partition``, ``start_value(n)``,
``start_velocity(n)``, ``end_value(n)``, ``end_velocity(n)``,
``value_on(n, s)`` and ``velocity_on(n, s)`` on free DOF vectors; both
SpaceTimeSolution and TrajectoryDifference qualify.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .quadrature import gauss_legendre01


class RateError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyBreakdown:
    dissipation: float
    velocity_initial: float
    velocity_jumps: float
    velocity_final: float
    displacement_initial: float
    displacement_jumps: float
    displacement_final: float

    @property
    def total(self) -> float:
        return float(sum(getattr(self, f.name) for f in fields(self)))

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.total))

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["total"] = self.total
        return d


def _energy(traj, qm, qa, nu: float, n_quad: int | None) -> EnergyBreakdown:
    part = traj.partition
    N = part.n_slabs
    diss = 0.0
    for n in range(N):
        nq = int(part.degrees[n]) + 1 if n_quad is None else n_quad
        s, w = gauss_legendre01(nq)
        V = traj.velocity_on(n, s)
        diss += float(part.taus[n]) * sum(w[j] * qm(V[:, j], V[:, j]) for j in range(len(s)))
    vj = uj = 0.0
    for n in range(1, N):
        dv = traj.start_velocity(n) - traj.end_velocity(n - 1)
        du = traj.start_value(n) - traj.end_value(n - 1)
        vj += qm(dv, dv)
        uj += qa(du, du)
    v0, u0 = traj.start_velocity(0), traj.start_value(0)
    vT, uT = traj.end_velocity(N - 1), traj.end_value(N - 1)
    return EnergyBreakdown(nu * diss, 0.5 * qm(v0, v0), 0.5 * vj, 0.5 * qm(vT, vT),
                           0.5 * qa(u0, u0), 0.5 * uj, 0.5 * qa(uT, uT))


def energy_norm(traj, M, A, nu: float, n_quad: int | None = None) -> EnergyBreakdown:
    """Vector view: every term a quadratic form v^T M v or v^T A v.

    The default temporal rule has r+1 Gauss points, exact for the degree
    2r-2 velocity integrand; pass ``n_quad`` for non-polynomial trajectories.
    """
    return _energy(traj, lambda a, b: float(a @ (M @ b)), lambda a, b: float(a @ (A @ b)),
                   nu, n_quad)


def triple_norm(traj, space, nu: float, n_quad: int | None = None) -> EnergyBreakdown:
    """Function view: the same terms through the element-wise forms m_h and a_h."""
    return _energy(traj, space.mh, space.ah, nu, n_quad)


def bilinear_form(v, w, M, A, nu: float, n_quad: int | None = None) -> float:
    """Space-time form A(v, w) for two discrete functions on the same partition."""
    part = v.partition
    N = part.n_slabs
    total = 0.0
    for n in range(N):
        nq = int(part.degrees[n]) + 2 if n_quad is None else n_quad
        s, q = gauss_legendre01(nq)
        q = q * float(part.taus[n])
        dw = w.velocity_on(n, s)
        integrand = (M @ (v.acceleration_on(n, s) + nu * v.velocity_on(n, s))) + A @ v.value_on(n, s)
        total += float(np.sum(integrand * dw * q))
    for n in range(1, N):
        jv = v.start_velocity(n) - v.end_velocity(n - 1)
        ju = v.start_value(n) - v.end_value(n - 1)
        total += float(jv @ (M @ w.start_velocity(n)) + ju @ (A @ w.start_value(n)))
    total += float(v.start_velocity(0) @ (M @ w.start_velocity(0))
                   + v.start_value(0) @ (A @ w.start_value(0)))
    return total


class TrajectoryDifference:
    """Trajectory t -> X(t) - u_htau(t) for a reference continuous in time.

    ``state(times)`` returns (U, V) with one row per time.  The reference
    has no jumps, so the jump terms of the difference are those of the
    discrete solution.
    """

    def __init__(self, solution, state):
        self.solution = solution
        self.partition = solution.partition
        self._state = state

    def _times(self, n, s):
        b = self.solution.bases[n]
        return b.t0 + np.atleast_1d(np.asarray(s, dtype=float)) * b.tau

    def value_on(self, n, s):
        return self._state(self._times(n, s))[0].T - self.solution.value_on(n, s)

    def velocity_on(self, n, s):
        return self._state(self._times(n, s))[1].T - self.solution.velocity_on(n, s)

    def _at(self, t, i):
        return self._state(np.array([t]))[i][0]

    def start_value(self, n):
        return self._at(self.solution.bases[n].t0, 0) - self.solution.start_value(n)

    def start_velocity(self, n):
        return self._at(self.solution.bases[n].t0, 1) - self.solution.start_velocity(n)

    def end_value(self, n):
        return self._at(self.solution.bases[n].t1, 0) - self.solution.end_value(n)

    def end_velocity(self, n):
        return self._at(self.solution.bases[n].t1, 1) - self.solution.end_velocity(n)


def interpolant_state(space, u, u_t):
    """state(times) for the VE interpolants of u(x, y, t) and u_t."""

    def state(times):
        U = np.array([space.interpolate(lambda x, y: u(x, y, t)) for t in times])
        V = np.array([space.interpolate(lambda x, y: u_t(x, y, t)) for t in times])
        return U, V

    return state


def interpolant_difference(solution, u, u_t) -> TrajectoryDifference:
    return TrajectoryDifference(solution, interpolant_state(solution.space, u, u_t))


def history_error(solution, u, u_t, nu: float, n_quad: int | None = None,
                  state=None) -> EnergyBreakdown:
    """Full-history energy norm of I_h u - u_htau (jumps included).

    With ``state`` given, the reference is that trajectory instead of the
    interpolant of (u, u_t).
    """
    if state is None:
        state = interpolant_state(solution.space, u, u_t)
    diff = TrajectoryDifference(solution, state)
    if n_quad is None:
        n_quad = int(solution.partition.degrees.max()) + 4
    return energy_norm(diff, solution.space.M, solution.space.A, nu, n_quad)


@dataclass(frozen=True)
class FinalTimeError:
    h1: float  # sqrt(e^T A e)
    l2: float  # sqrt(e'^T M e')
    energy: float


def final_time_error(solution, u, u_t, space=None, T: float | None = None) -> FinalTimeError:
    """Error against the VE interpolant of (u, u_t) at T, using U(T^-)."""
    space = solution.space if space is None else space
    T = solution.partition.T if T is None else T
    e = space.interpolate(lambda x, y: u(x, y, T)) - solution.value(T)
    ed = space.interpolate(lambda x, y: u_t(x, y, T)) - solution.velocity(T)
    h1 = float(np.sqrt(max(e @ (space.A @ e), 0.0)))
    l2 = float(np.sqrt(max(ed @ (space.M @ ed), 0.0)))
    return FinalTimeError(h1, l2, float(np.hypot(h1, l2)))


def data_norm(space, f, partition, U0, Z0, n_quad: int | None = None) -> float:
    """(int_0^T ||f_h||^2 dt + U0^T A U0 + Z0^T M Z0)^(1/2)."""
    load = 0.0
    if f is not None:
        for n in range(partition.n_slabs):
            nq = int(partition.degrees[n]) + 2 if n_quad is None else n_quad
            s, w = gauss_legendre01(nq)
            t0, tau = float(partition.breaks[n]), float(partition.taus[n])
            load += tau * sum(wj * space.load_l2_norm_sq(f, t0 + sj * tau) for sj, wj in zip(s, w))
    return float(np.sqrt(load + U0 @ (space.A @ U0) + Z0 @ (space.M @ Z0)))


@dataclass(frozen=True)
class RateFit:
    params: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    local_slopes: np.ndarray


def fit_rate(params, errors) -> RateFit:
    """Least-squares slope of log(error) against log(param)."""
    p = np.asarray(params, dtype=float)
    e = np.asarray(errors, dtype=float)
    if p.shape != e.shape or p.ndim != 1:
        raise RateError("params and errors must be 1-d arrays of equal length")
    if len(p) < 3:
        raise RateError(f"need at least 3 (param, error) pairs, got {len(p)}")
    if np.any(p <= 0) or np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise RateError("params and errors must be positive and finite")
    if np.any(np.diff(p) >= 0):
        raise RateError("params must be strictly decreasing")
    lp, le = np.log(p), np.log(e)
    slope, intercept = np.polyfit(lp, le, 1)
    local = np.diff(le) / np.diff(lp)
    return RateFit(p, e, float(slope), float(intercept), local)


CONVERGENCE_COLUMNS = ("level", "h", "dt", "k", "r", "error_H1", "error_L2", "error_energy", "slope")


def write_convergence_csv(path, rows) -> None:
    """Rows are dicts keyed by CONVERGENCE_COLUMNS; floats written with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CONVERGENCE_COLUMNS)
        for row in rows:
            wr.writerow([_fmt(row.get(c, "")) for c in CONVERGENCE_COLUMNS])


def write_plot_data(path, x, y) -> None:
    with open(path, "w") as fh:
        for a, b in zip(x, y):
            fh.write(f"{a:.17g} {b:.17g}\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return v
