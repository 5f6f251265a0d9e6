import numpy as np
import pytest

from vemdg.dg import SlabBasis, SpaceTimeSolution, TimePartition
from vemdg.mesh import generate_structured
from vemdg.norms import (RateError, bilinear_form, data_norm, energy_norm, fit_rate,
                         history_error, triple_norm)
from vemdg.problems import manufactured
from vemdg.solvers import initial_data, solve_vemdg
from vemdg.vem import VemSpace


@pytest.fixture(scope="module")
def space():
    return VemSpace(generate_structured(3, 3), 2)


def random_solution(space, partition, seed, kind="lagrange"):
    rng = np.random.default_rng(seed)
    bases = [SlabBasis(int(partition.degrees[n]), float(partition.breaks[n]),
                       float(partition.taus[n]), kind) for n in range(partition.n_slabs)]
    coeffs = [rng.normal(size=(space.n_free, b.r + 1)) for b in bases]
    n = space.n_free
    return SpaceTimeSolution(space, partition, bases, coeffs, np.zeros(n), np.zeros(n))


def constant_solution(space, partition, V0):
    bases = [SlabBasis(int(partition.degrees[n]), float(partition.breaks[n]),
                       float(partition.taus[n])) for n in range(partition.n_slabs)]
    coeffs = [np.repeat(V0[:, None], b.r + 1, axis=1) for b in bases]
    return SpaceTimeSolution(space, partition, bases, coeffs, V0, np.zeros_like(V0))


def test_zero_trajectory_has_zero_norm(space):
    part = TimePartition.uniform(1.0, 3, 2)
    sol = constant_solution(space, part, np.zeros(space.n_free))
    assert energy_norm(sol, space.M, space.A, 0.5).total == 0.0


def test_constant_in_time(space):
    rng = np.random.default_rng(0)
    V0 = rng.normal(size=space.n_free)
    sol = constant_solution(space, TimePartition.uniform(1.0, 4, 2), V0)
    e = energy_norm(sol, space.M, space.A, 0.7)
    ref = V0 @ (space.A @ V0)
    # derivatives of a constant Lagrange combination vanish up to rounding
    assert max(e.dissipation, e.velocity_jumps, e.velocity_final) <= 1e-28 * ref
    assert e.displacement_jumps == 0.0
    assert e.total == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("nu", [0.0, 0.3])
@pytest.mark.parametrize("kind", ["lagrange", "legendre"])
def test_coercivity_identity(space, nu, kind):
    part = TimePartition([0.0, 0.2, 0.5, 1.0], [1, 3, 2])
    w = random_solution(space, part, 1, kind)
    lhs = bilinear_form(w, w, space.M, space.A, nu)
    rhs = energy_norm(w, space.M, space.A, nu).total
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_vector_and_function_views_agree(space):
    part = TimePartition.uniform(1.0, 3, 2)
    w = random_solution(space, part, 2)
    a = energy_norm(w, space.M, space.A, 0.4).as_dict()
    b = triple_norm(w, space, 0.4).as_dict()
    for key in a:
        assert b[key] == pytest.approx(a[key], rel=1e-13, abs=1e-13 * a["total"])


def test_norm_homogeneity_and_triangle(space):
    part = TimePartition.uniform(1.0, 3, 2)
    v, w = random_solution(space, part, 3), random_solution(space, part, 4)
    nv = energy_norm(v, space.M, space.A, 0.2).norm
    nw = energy_norm(w, space.M, space.A, 0.2).norm
    scaled = SpaceTimeSolution(space, part, v.bases, [-2.5 * c for c in v.coeffs], v.U0, v.Z0)
    assert energy_norm(scaled, space.M, space.A, 0.2).norm == pytest.approx(2.5 * nv, rel=1e-13)
    s = SpaceTimeSolution(space, part, v.bases, [a + b for a, b in zip(v.coeffs, w.coeffs)], v.U0, v.Z0)
    assert energy_norm(s, space.M, space.A, 0.2).norm <= nv + nw
    assert nv > 0 and nw > 0


def test_history_error_of_interpolant_trajectory_is_small(space):
    pr = manufactured()
    sol = solve_vemdg(pr, space, 2, TimePartition.uniform(1.0, 8, 3))
    he = history_error(sol, pr.exact, pr.exact_t, pr.nu)
    U0, Z0 = initial_data(pr, space)
    ref = data_norm(space, pr.f, sol.partition, U0, Z0)
    assert 0 < he.norm < 0.1 * ref
    # the initial terms of the difference vanish: the scheme starts from the interpolant
    assert he.displacement_initial <= 1e-24 * ref**2


def test_data_norm_without_load(space):
    rng = np.random.default_rng(5)
    U0, Z0 = rng.normal(size=(2, space.n_free))
    got = data_norm(space, None, TimePartition.uniform(1.0, 2, 1), U0, Z0)
    assert got == pytest.approx(np.sqrt(U0 @ (space.A @ U0) + Z0 @ (space.M @ Z0)), rel=1e-14)


def test_fit_rate_examples():
    f = fit_rate([0.1, 0.05, 0.025], [1e-2, 2.5e-3, 6.25e-4])
    assert f.slope == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(f.local_slopes, 2.0)
    f = fit_rate([1.0, 0.5, 0.25, 0.125], [3.0, 1.5, 0.75, 0.375])
    assert f.slope == pytest.approx(1.0, abs=1e-12)
    assert np.exp(f.intercept) == pytest.approx(3.0, rel=1e-12)


@pytest.mark.parametrize("params,errors", [
    ([0.1, 0.05], [1.0, 0.5]),
    ([0.1, 0.05, 0.025], [1.0, 0.0, 0.1]),
    ([0.1, 0.2, 0.05], [1.0, 2.0, 0.5]),
    ([0.1, 0.05, 0.025], [1.0, np.nan, 0.1]),
    ([0.1, 0.05, 0.025], [1.0, 0.5]),
])
def test_fit_rate_rejects_bad_input(params, errors):
    with pytest.raises(RateError):
        fit_rate(params, errors)
