"""Discontinuous Galerkin time stepping on slabs for M U'' + nu M U' + A U = F.

On slab I_n with basis psi_m the unknown is U(t) = sum_m alpha[:, m] psi_m(t);
test functions are psi_l' (the velocity of the test), so the slab system is

    M (x) (N1 + nu N2 + N4) + A (x) (N3 + N5),

with the previous slab entering through the upwind traces at t_{n-1}.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

from .linalg import DenseSlabSolver, KroneckerOperator, KroneckerSlabSolver, LinAlgError
from .quadrature import gauss_legendre01, gauss_lobatto01

log = logging.getLogger(__name__)


class DGError(ValueError):
    pass


@dataclass(frozen=True)
class TimePartition:
    breaks: np.ndarray
    degrees: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        d = np.asarray(self.degrees, dtype=int)
        if b.ndim != 1 or len(b) < 2 or b[0] != 0.0:
            raise DGError("break points must start at 0 and contain at least one slab")
        if np.any(np.diff(b) <= 0):
            raise DGError("slab lengths must be positive")
        if len(d) != len(b) - 1:
            raise DGError("one degree per slab required")
        if np.any(d < 1):
            raise DGError("slab degrees must be >= 1")
        b.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "degrees", d)

    @classmethod
    def uniform(cls, T: float, n_slabs: int, r: int) -> "TimePartition":
        if n_slabs < 1:
            raise DGError("need at least one slab")
        return cls(np.arange(n_slabs + 1) * (T / n_slabs), np.full(n_slabs, r))

    @classmethod
    def from_step(cls, T: float, dt: float, r: int) -> "TimePartition":
        n = int(round(T / dt))
        if n < 1 or abs(n * dt - T) > 1e-9 * T:
            raise DGError(f"T={T} is not an integer multiple of dt={dt}")
        return cls.uniform(T, n, r)

    @property
    def n_slabs(self) -> int:
        return len(self.degrees)

    @property
    def T(self) -> float:
        return float(self.breaks[-1])

    @property
    def taus(self) -> np.ndarray:
        return np.diff(self.breaks)

    def slab_of(self, t: float) -> int:
        """0-based slab index with the left-limit convention (t in (t_{n-1}, t_n])."""
        if t < 0 or t > self.T * (1 + 1e-14):
            raise DGError(f"time {t} outside [0, {self.T}]")
        n = int(np.searchsorted(self.breaks, t, side="left")) - 1
        return min(max(n, 0), self.n_slabs - 1)


@lru_cache(maxsize=None)
def _reference_coefficients(r: int, kind: str) -> np.ndarray:
    """Legendre-series coefficients (on x = 2s - 1) of the basis; column m is psi_m."""
    if kind == "lagrange":
        s, _ = gauss_lobatto01(r + 1)
        P = npleg.legvander(2 * s - 1, r)  # P[j, p] = P_p(x_j)
        return np.linalg.inv(P)
    if kind == "legendre":
        return np.eye(r + 1)
    raise DGError(f"unknown time basis {kind!r}")


@dataclass(frozen=True)
class SlabBasis:
    """Degree-r basis on [t0, t0 + tau]; ``kind`` is 'lagrange' (Gauss-Lobatto nodes) or 'legendre'."""

    r: int
    t0: float
    tau: float
    kind: str = "lagrange"

    @property
    def size(self) -> int:
        return self.r + 1

    @property
    def t1(self) -> float:
        return self.t0 + self.tau

    def ref(self, s, deriv: int = 0) -> np.ndarray:
        """(r+1, len(s)) d-th derivatives with respect to t, at reference points s in [0, 1]."""
        C = _reference_coefficients(self.r, self.kind)
        for _ in range(deriv):
            C = npleg.legder(C, axis=0) if C.shape[0] > 1 else np.zeros_like(C)
        x = 2 * np.atleast_1d(np.asarray(s, dtype=float)) - 1
        vals = npleg.legvander(x, C.shape[0] - 1) @ C if C.shape[0] else np.zeros((len(x), self.size))
        return vals.T * (2.0 / self.tau) ** deriv

    def __call__(self, t, deriv: int = 0) -> np.ndarray:
        s = (np.atleast_1d(np.asarray(t, dtype=float)) - self.t0) / self.tau
        return self.ref(s, deriv)

    def start(self, deriv: int = 0) -> np.ndarray:
        return self.ref([0.0], deriv)[:, 0]

    def end(self, deriv: int = 0) -> np.ndarray:
        return self.ref([1.0], deriv)[:, 0]


@dataclass(frozen=True)
class TemporalMatrices:
    N1: np.ndarray
    N2: np.ndarray
    N3: np.ndarray
    N4: np.ndarray
    N5: np.ndarray
    N6: np.ndarray | None
    N7: np.ndarray | None

    def operator_factors(self, nu: float) -> tuple[np.ndarray, np.ndarray]:
        return self.N1 + nu * self.N2 + self.N4, self.N3 + self.N5


def temporal_matrices(basis: SlabBasis, prev: SlabBasis | None = None,
                      n_quad: int | None = None) -> TemporalMatrices:
    """N1..N5 on the slab; N6, N7 couple ``prev``'s end traces to this slab's start traces.

    Rows index the test function l, columns the trial function m.
    """
    nq = basis.r + 2 if n_quad is None else n_quad
    s, w = gauss_legendre01(nq)
    w = w * basis.tau
    p0, p1, p2 = basis.ref(s, 0), basis.ref(s, 1), basis.ref(s, 2)
    N1 = (p1 * w) @ p2.T
    N2 = (p1 * w) @ p1.T
    N3 = (p1 * w) @ p0.T
    d0, v0 = basis.start(1), basis.start(0)
    N4 = np.outer(d0, d0)
    N5 = np.outer(v0, v0)
    N6 = N7 = None
    if prev is not None:
        N6 = np.outer(d0, prev.end(1))
        N7 = np.outer(v0, prev.end(0))
    return TemporalMatrices(N1, N2, N3, N4, N5, N6, N7)


@dataclass
class SlabSystem:
    operator: KroneckerOperator
    rhs: np.ndarray  # (N_h, r+1)
    basis: SlabBasis


def slab_load(space, f, basis: SlabBasis, n_points: int | None = None) -> np.ndarray:
    """(N_h, r+1) array of int_{I_n} F(t) psi_l'(t) dt by Gauss quadrature."""
    n = space.n_free
    if f is None:
        return np.zeros((n, basis.size))
    nq = basis.r + 2 if n_points is None else n_points
    s, w = gauss_legendre01(nq)
    times = basis.t0 + s * basis.tau
    Fq = space.load_matrix(f, times)
    return Fq @ (basis.ref(s, 1) * (w * basis.tau)).T


def slab_rhs(space, f, basis: SlabBasis, U_prev, V_prev, n_points=None) -> np.ndarray:
    """Load term plus upwind data M V(t-) psi'(t+)^T + A U(t-) psi(t+)^T."""
    R = slab_load(space, f, basis, n_points)
    R += np.outer(space.M @ V_prev, basis.start(1))
    R += np.outer(space.A @ U_prev, basis.start(0))
    return R


def build_slab_system(space, partition: TimePartition, n: int, nu: float, f,
                      U_prev, V_prev, kind: str = "lagrange", n_points=None) -> SlabSystem:
    """Operator and right-hand side for 0-based slab ``n``.

    ``U_prev``/``V_prev`` are the displacement and velocity at t_{n-1}^-, or the
    initial data (U_h0, Z_h0) for the first slab.
    """
    if not 0 <= n < partition.n_slabs:
        raise DGError(f"slab index {n} out of range")
    if len(U_prev) != space.n_free or len(V_prev) != space.n_free:
        raise DGError("state vectors do not match the space dimension")
    basis = SlabBasis(int(partition.degrees[n]), float(partition.breaks[n]),
                      float(partition.taus[n]), kind)
    T1, T2 = temporal_matrices(basis).operator_factors(nu)
    op = KroneckerOperator(((space.M, T1), (space.A, T2)))
    return SlabSystem(op, slab_rhs(space, f, basis, U_prev, V_prev, n_points), basis)


@dataclass
class SpaceTimeSolution:
    """Per-slab coefficient arrays alpha^n of shape (N_h, r_n+1) on the free DOFs."""

    space: object
    partition: TimePartition
    bases: list
    coeffs: list
    U0: np.ndarray
    Z0: np.ndarray
    nu: float = 0.0
    residuals: list = field(default_factory=list)

    @property
    def n_slabs(self) -> int:
        return len(self.coeffs)

    def _slab_eval(self, n: int, t: float, deriv: int) -> np.ndarray:
        return self.coeffs[n] @ self.bases[n](t, deriv)[:, 0]

    def value(self, t: float) -> np.ndarray:
        """U(t), with the left limit at slab break points (and U(0^+) at t = 0)."""
        n = self.partition.slab_of(t)
        return self._slab_eval(n, t, 0)

    def velocity(self, t: float) -> np.ndarray:
        n = self.partition.slab_of(t)
        return self._slab_eval(n, t, 1)

    def start_value(self, n: int) -> np.ndarray:
        return self.coeffs[n] @ self.bases[n].start(0)

    def start_velocity(self, n: int) -> np.ndarray:
        return self.coeffs[n] @ self.bases[n].start(1)

    def end_value(self, n: int) -> np.ndarray:
        return self.coeffs[n] @ self.bases[n].end(0)

    def end_velocity(self, n: int) -> np.ndarray:
        return self.coeffs[n] @ self.bases[n].end(1)

    def velocity_on(self, n: int, s) -> np.ndarray:
        """(N_h, len(s)) velocities at reference points s of slab n."""
        return self.coeffs[n] @ self.bases[n].ref(s, 1)

    def value_on(self, n: int, s) -> np.ndarray:
        return self.coeffs[n] @ self.bases[n].ref(s, 0)

    def acceleration_on(self, n: int, s) -> np.ndarray:
        return self.coeffs[n] @ self.bases[n].ref(s, 2)

    def evaluate(self, x, t: float) -> float:
        return self.space.evaluate(self.value(t), x)

    def history(self, x, times) -> np.ndarray:
        e = self.space.point_evaluator(x)
        return np.array([e @ self.value(t) for t in times])


def make_solver(space, T1, T2, method: str = "auto"):
    n = space.n_free * T1.shape[0]
    if method == "auto":
        method = "dense" if n <= 600 else "kronecker"
    if method == "dense":
        return DenseSlabSolver(space.M, space.A, T1, T2)
    if method == "kronecker":
        return KroneckerSlabSolver(space.M, space.A, T1, T2)
    raise DGError(f"unknown slab solver {method!r}")


def march(space, partition: TimePartition, nu: float, f, U0, Z0, kind: str = "lagrange",
          solver: str = "auto", n_points: int | None = None, rtol: float = 1e-9) -> SpaceTimeSolution:
    """Solve slab by slab; slab n uses the end traces of slab n-1 (or the data) upwind."""
    U0 = np.asarray(U0, dtype=float)
    Z0 = np.asarray(Z0, dtype=float)
    if len(U0) != space.n_free or len(Z0) != space.n_free:
        raise DGError("initial data do not match the space dimension")
    cache = {}
    bases, coeffs, residuals = [], [], []
    U_prev, V_prev = U0, Z0
    for n in range(partition.n_slabs):
        r = int(partition.degrees[n])
        tau = float(partition.taus[n])
        key = (r, float(f"{tau:.13e}"))
        if key not in cache:
            ref = SlabBasis(r, 0.0, key[1], kind)
            T1, T2 = temporal_matrices(ref).operator_factors(nu)
            try:
                cache[key] = make_solver(space, T1, T2, solver)
            except LinAlgError as exc:
                raise DGError(f"slab {n}: {exc}") from None
        slv = cache[key]
        basis = SlabBasis(r, float(partition.breaks[n]), key[1], kind)
        R = slab_rhs(space, f, basis, U_prev, V_prev, n_points)
        X = slv.solve(R)
        res = np.linalg.norm(slv.op.matmat(X) - R) if X.size else 0.0
        scale = np.linalg.norm(R)
        rel = res / scale if scale > 0 else res
        residuals.append(rel)
        if not np.all(np.isfinite(X)):
            raise DGError(f"slab {n}: non-finite solution")
        if rel > rtol:
            log.warning("slab %d: relative residual %.2e exceeds %.1e", n, rel, rtol)
        log.debug("slab %d residual %.2e", n, rel)
        bases.append(basis)
        coeffs.append(X)
        U_prev, V_prev = X @ basis.end(0), X @ basis.end(1)
    return SpaceTimeSolution(space, partition, bases, coeffs, U0, Z0, nu, residuals)
