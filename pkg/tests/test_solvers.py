import numpy as np
import pytest
import scipy.sparse as sp

from vemdg.dg import TimePartition
from vemdg.experiments import family_space
from vemdg.mesh import generate_structured
from vemdg.norms import final_time_error, fit_rate, history_error
from vemdg.problems import WaveProblem, oracle_problem, polynomial_patch, zero_problem
from vemdg.solvers import (SolverError, SpectralDecomposition, evaluate, newmark, solve_newmark,
                           solve_vemdg, spectral_semidiscrete, spectral_state)
from vemdg.vem import VemSpace


@pytest.fixture(scope="module")
def grid6_k2():
    return VemSpace(generate_structured(6, 6), 2)


@pytest.fixture(scope="module")
def grid4_k1():
    return VemSpace(generate_structured(4, 4), 1)


def test_zero_problem_zero_solution(grid4_k1):
    sol = solve_vemdg(zero_problem(), grid4_k1, 1, TimePartition.uniform(1.0, 3, 2))
    assert all(not np.any(c) for c in sol.coeffs)


def test_partition_must_match_problem(grid4_k1):
    with pytest.raises(SolverError):
        solve_vemdg(zero_problem(T=2.0), grid4_k1, 1, TimePartition.uniform(1.0, 2, 1))
    with pytest.raises(SolverError):
        solve_vemdg(zero_problem(), grid4_k1, 3, TimePartition.uniform(1.0, 2, 1))


def test_polynomial_patch_exact():
    space = family_space(50, 4)
    pr = polynomial_patch()
    sol = solve_vemdg(pr, space, 4, TimePartition.uniform(1.0, 5, 2))
    fe = final_time_error(sol, pr.exact, pr.exact_t)
    assert fe.energy <= 1e-8


def test_newmark_scalar_cosine_second_order():
    errs, dts = [], [0.1, 0.05, 0.025, 0.0125]
    for dt in dts:
        n = int(round(2.0 / dt))
        tr = newmark(sp.identity(1), sp.identity(1), lambda t: np.zeros(1), np.ones(1), np.zeros(1),
                     dt, n)
        errs.append(np.abs(tr.U[:, 0] - np.cos(tr.times)).max())
    assert 1.9 <= fit_rate(dts, errs).slope <= 2.1


def test_newmark_conserves_energy_undamped():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(8, 8))
    M = sp.csr_matrix(X @ X.T / 8 + np.eye(8))
    Y = rng.normal(size=(8, 8))
    K = sp.csr_matrix(Y @ Y.T)
    tr = newmark(M, K, lambda t: np.zeros(8), rng.normal(size=8), rng.normal(size=8), 0.05, 1000)
    E = 0.5 * np.einsum("ij,ij->i", tr.V, (M @ tr.V.T).T) + 0.5 * np.einsum("ij,ij->i", tr.U, (K @ tr.U.T).T)
    assert np.abs(E / E[0] - 1).max() <= 1e-10


def test_newmark_energy_non_increasing_damped(grid4_k1):
    pr = WaveProblem(0.8, 2.0, None, u0=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    tr = solve_newmark(pr, grid4_k1, 1, 0.02)
    M, A = grid4_k1.M, grid4_k1.A
    E = np.array([0.5 * v @ (M @ v) + 0.5 * u @ (A @ u) for u, v in zip(tr.U, tr.V)])
    assert np.all(np.diff(E) <= 1e-14 * E[0])


def test_newmark_rejects_bad_steps(grid4_k1):
    with pytest.raises(SolverError):
        solve_newmark(zero_problem(), grid4_k1, 1, 0.3)
    with pytest.raises(SolverError):
        newmark(sp.identity(1), sp.identity(1), lambda t: np.zeros(1), np.ones(1), np.zeros(1), -1.0, 3)


def test_spectral_single_mode(grid4_k1):
    dec = SpectralDecomposition.of(grid4_k1, 0.0)
    w1 = dec.modes[:, 0]
    mode = grid4_k1.extend(w1)
    times = np.array([0.0, 0.3, 1.0])
    om = np.sqrt(dec.eigenvalues[0])
    c = w1 @ (grid4_k1.M @ w1)
    assert c == pytest.approx(1.0, rel=1e-12)
    g = np.cos(om * times)
    ref = np.outer(g, w1)
    state = _mode_problem(grid4_k1, mode)
    U, _, _ = spectral_semidiscrete(state, grid4_k1, 1, times, dec)
    assert np.abs(U - ref).max() <= 1e-10 * np.abs(w1).max()


def _mode_problem(space, mode_full):
    """Problem whose u0 interpolates to the given k=1 DOF vector."""
    xy = space.dof_coordinates
    from scipy.interpolate import LinearNDInterpolator

    lut = LinearNDInterpolator(xy[: space.mesh.n_vertices], mode_full[: space.mesh.n_vertices])
    return WaveProblem(0.0, 1.0, None, u0=lambda x, y: lut(x, y))


def test_spectral_envelope_decay(grid4_k1):
    nu = 0.6
    pr = WaveProblem(nu, 3.0, None, u0=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
                     z0=lambda x, y: x * y * (1 - x) * (1 - y))
    dec = SpectralDecomposition.of(grid4_k1, nu)
    times = np.linspace(0, 3, 31)
    U, V, _ = spectral_semidiscrete(pr, grid4_k1, 1, times, dec)
    W, M = dec.modes, grid4_k1.M
    gam = (W.T @ (M @ U.T))
    c, d = gam[:, 0], W.T @ (M @ V[0])
    bound = np.abs(c) + (np.abs(d) + nu * np.abs(c) / 2) / dec.frequencies
    floor = 1e-14 * np.abs(gam).max()
    assert np.all(np.abs(gam) <= np.exp(-nu * times / 2)[None, :] * bound[:, None] * (1 + 1e-12) + floor)


def test_spectral_ode_residual(grid4_k1):
    pr = oracle_problem()
    rng = np.random.default_rng(3)
    times = np.sort(rng.uniform(0, 1, 6))
    U, V, Acc = spectral_semidiscrete(pr, grid4_k1, 1, times)
    M, A = grid4_k1.M, grid4_k1.A
    for t, u, v, a in zip(times, U, V, Acc):
        F = grid4_k1.project_load(pr.f, t)
        res = M @ a + pr.nu * (M @ v) + A @ u - F
        scale = np.linalg.norm(M @ a) + np.linalg.norm(A @ u) + np.linalg.norm(F)
        assert np.linalg.norm(res) <= 1e-7 * scale


def test_spectral_rejects_large_dissipation(grid4_k1):
    lam1 = SpectralDecomposition.of(grid4_k1, 0.0).eigenvalues[0]
    with pytest.raises(SolverError):
        SpectralDecomposition.of(grid4_k1, 2 * np.sqrt(lam1) * 1.01)


def test_evaluate_polynomial_exact():
    space = VemSpace(generate_structured(3, 3), 2)
    pr = oracle_problem()
    sol = solve_vemdg(pr, space, 2, TimePartition.uniform(1.0, 2, 3))
    x = (0.37, 0.61)
    ts = np.linspace(0.5, 1.0, 7)[1:]
    vals = np.array([evaluate(sol, x, t) for t in ts])
    # degree 3 in time on the last slab, so a cubic fit through six samples is exact
    coef = np.polyfit(ts, vals, 3)
    assert np.abs(np.polyval(coef, ts) - vals).max() <= 1e-12 * np.abs(vals).max()
    assert evaluate(sol, x, 0.8) == pytest.approx(space.evaluate(sol.value(0.8), x), abs=1e-15)


def test_evaluate_at_slab_end_uses_left_limit():
    space = VemSpace(generate_structured(3, 3), 2)
    pr = oracle_problem()
    sol = solve_vemdg(pr, space, 2, TimePartition.uniform(1.0, 4, 2))
    x = (0.4, 0.6)
    eps = 1e-8
    assert evaluate(sol, x, 0.5) == pytest.approx(evaluate(sol, x, 0.5 - eps), abs=1e-6)
    assert evaluate(sol, x, 0.5) == pytest.approx(space.evaluate(sol.end_value(1), x), abs=1e-15)


def test_receiver_traces_converge_under_mesh_refinement():
    pr = oracle_problem()
    times = np.linspace(0, 1, 11)
    traces = []
    for n in (4, 8, 16):
        space = VemSpace(generate_structured(n, n), 2)
        sol = solve_vemdg(pr, space, 2, TimePartition.uniform(1.0, 16, 3))
        traces.append(sol.history((0.5, 0.5), times))
    d1 = np.abs(traces[1] - traces[0]).max()
    d2 = np.abs(traces[2] - traces[1]).max()
    assert d2 < 0.5 * d1


def test_dg_energy_decays_without_load(grid4_k1):
    pr = WaveProblem(0.5, 4.0, None, u0=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    sol = solve_vemdg(pr, grid4_k1, 1, TimePartition.uniform(4.0, 16, 2))
    M, A = grid4_k1.M, grid4_k1.A
    E = [0.5 * sol.end_velocity(n) @ (M @ sol.end_velocity(n)) + 0.5 * sol.end_value(n) @ (A @ sol.end_value(n))
         for n in range(16)]
    assert np.all(np.diff(E) < 0)
    assert E[-1] < np.exp(-0.5 * 3.0) * E[0] * 5


@pytest.fixture(scope="module")
def oracle_runs(grid6_k2):
    pr = oracle_problem()
    dec = SpectralDecomposition.of(grid6_k2, pr.nu)
    state = spectral_state(pr, grid6_k2, dec)
    return pr, dec, state


@pytest.mark.parametrize("r", [2, 3])
def test_dg_converges_to_oracle_at_dg_rate(grid6_k2, oracle_runs, r):
    pr, dec, state = oracle_runs
    dts, errs = [], []
    for n in (4, 8, 16):
        sol = solve_vemdg(pr, grid6_k2, 2, TimePartition.uniform(1.0, n, r))
        errs.append(history_error(sol, None, None, pr.nu, state=state).norm)
        dts.append(1.0 / n)
    slope = fit_rate(dts, errs).slope
    assert r - 1 <= slope <= r, slope


def test_newmark_converges_to_oracle_second_order(grid6_k2, oracle_runs):
    pr, dec, state = oracle_runs
    M, A = grid6_k2.M, grid6_k2.A
    U, V = state(np.array([1.0]))
    dts, errs = [0.05, 0.025, 0.0125], []
    for dt in dts:
        tr = solve_newmark(pr, grid6_k2, 2, dt)
        e, ed = U[0] - tr.U[-1], V[0] - tr.V[-1]
        errs.append(np.sqrt(e @ (A @ e) + ed @ (M @ ed)))
    assert 1.7 <= fit_rate(dts, errs).slope <= 2.3
