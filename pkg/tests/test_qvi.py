import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid_search_pqvi, random_pqvi
from nfdqvi.exceptions import DomainError, NonConvergenceError
from nfdqvi.problem import AffineMap, FixedBox, MovingBox, VariationalMapSpec, derive_constants
from nfdqvi.qvi import (
    check_complementarity,
    default_step,
    fixed_point_residual,
    project_box,
    project_constraint,
    project_moving_set,
    sensitivity_check,
    solve_pqvi,
    solve_pqvi_batch,
    solve_pqvi_nested,
    vi_gap,
)


def scalar_map(offset):
    """G(u) = u + offset, no state dependence."""
    return VariationalMapSpec([[1.0]], [[0.0]], c0=[offset])


# projections -----------------------------------------------------------------


def test_project_box_examples():
    np.testing.assert_array_equal(project_box([0, 0], [1, 1], [2.0, -1.0]), [1.0, 0.0])
    np.testing.assert_array_equal(project_box([0.5], [0.5], [3.0]), [0.5])
    with pytest.raises(DomainError):
        project_box([1.0], [0.0], [0.5])


def test_project_moving_set_example():
    # K(u) = 0.5 u_2 + [0, 1] in the first coordinate; u_2 = 1 shifts it to [0.5, 1.5]
    spec = MovingBox(AffineMap([0.0, 0.0], control=[[0.0, 0.5], [0.0, 0.0]]), [0, 0], [1, 1])
    out = project_moving_set(spec, np.array([0.0, 1.0]), np.array([2.0, 0.3]))
    np.testing.assert_allclose(out, [1.5, 0.3])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_projection_is_idempotent_and_nonexpansive(point):
    lo, hi = np.array([-1.0, 0.0, -0.5]), np.array([1.0, 2.0, 0.5])
    p = project_box(lo, hi, point)
    np.testing.assert_array_equal(project_box(lo, hi, p), p)
    q = project_box(lo, hi, np.zeros(3))
    assert np.linalg.norm(p - q) <= np.linalg.norm(np.asarray(point)) + 1e-12


def test_moving_projection_lipschitz_in_u(rng):
    vm, cons, _ = random_pqvi(rng, 3)
    l_K = cons.l_K
    for _ in range(200):
        u1, u2, w = rng.uniform(-3, 3, (3, 3))
        d = np.linalg.norm(project_constraint(cons, u1, w) - project_constraint(cons, u2, w))
        assert d <= l_K * np.linalg.norm(u1 - u2) + 1e-12


# step sizes ------------------------------------------------------------------


def test_default_step_examples():
    vm = VariationalMapSpec(2.0 * np.eye(2), 0.5 * np.eye(2), lipschitz=2.0)
    assert default_step(vm) == pytest.approx(0.5)

    class Consts:
        l_G, eta_G = 1.0, 2.0

    assert default_step(Consts) == pytest.approx(2.0)
    assert default_step(Consts, "uniqueness") == pytest.approx(1.618034, abs=1e-6)
    assert default_step(Consts, "sensitivity") == pytest.approx(1.366025, abs=1e-6)
    with pytest.raises(DomainError):
        default_step(Consts, "bogus")


# one-dimensional examples ----------------------------------------------------


def test_interior_stationary_point():
    rep = solve_pqvi(scalar_map(-1.0), FixedBox([0.0], [2.0]), 0.0, [0.0])
    assert rep.converged
    np.testing.assert_allclose(rep.solution, [1.0], atol=1e-10)


def test_boundary_solution_and_vi_inequality():
    vm, box = scalar_map(1.0), FixedBox([0.0], [2.0])
    u = solve_pqvi(vm, box, 0.0, [0.0]).solution
    np.testing.assert_allclose(u, [0.0], atol=1e-12)
    g = vm(0.0, [0.0], u)
    for v in np.linspace(0, 2, 21):
        assert g @ (np.array([v]) - u) >= 0.0
    assert vi_gap(vm, box, 0.0, [0.0], u) >= -1e-12


def test_self_consistent_moving_set():
    # u_2 tracks u_1, so K_1 = 0.1 u_2 + [0, 2] plays the role of 0.1 u + [0, 2];
    # u = 1 lies in [0.1, 2.1]
    vm = VariationalMapSpec([[1.0, 0.0], [-1.0, 1.0]], [[0.0], [0.0]], c0=[-1.0, 0.0])
    cons = MovingBox(AffineMap([0.0, 0.0], control=[[0.0, 0.1], [0.0, 0.0]]), [0, -5], [2, 5])
    u = solve_pqvi(vm, cons, 0.0, [0.0]).solution
    np.testing.assert_allclose(u, [1.0, 1.0], atol=1e-9)
    assert 0.1 * u[1] <= u[0] <= 0.1 * u[1] + 2


def test_nonconvergence_raises():
    with pytest.raises(NonConvergenceError) as info:
        solve_pqvi(scalar_map(-1.5), FixedBox([0.0], [2.0]), 0.0, [0.0], rho=1e-4, max_iter=5)
    assert info.value.last is not None


# oracles ---------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("m", [1, 2])
def test_matches_grid_search(seed, m):
    rng = np.random.default_rng(seed)
    vm, cons, x = random_pqvi(rng, m)
    rep = solve_pqvi(vm, cons, 0.3, x)
    assert rep.residual <= 1e-10
    oracle = grid_search_pqvi(vm, cons, 0.3, x)
    assert np.max(np.abs(rep.solution - oracle)) <= 2e-3


@pytest.mark.parametrize("seed", range(5))
def test_matches_nested_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    vm, cons, x = random_pqvi(rng, 3)
    u = solve_pqvi(vm, cons, 0.0, x, tol=1e-13).solution
    np.testing.assert_allclose(solve_pqvi_nested(vm, cons, 0.0, x), u, atol=1e-10)


def test_batch_matches_single(rng):
    vm, cons, _ = random_pqvi(rng, 3)
    X = rng.uniform(-1, 1, (20, 2))
    s = np.linspace(0, 1, 20)
    U, iters = solve_pqvi_batch(vm, cons, s, X)
    for k in range(20):
        rep = solve_pqvi(vm, cons, s[k], X[k])
        np.testing.assert_allclose(U[k], rep.solution, atol=1e-14)
        assert iters[k] == rep.iterations


@pytest.mark.parametrize("seed", range(5))
def test_complementarity_on_cone_instances(seed):
    rng = np.random.default_rng(200 + seed)
    vm, cons, x = random_pqvi(rng, 3, cone=True)
    u = solve_pqvi(vm, cons, 0.0, x, tol=1e-13).solution
    assert check_complementarity(vm, cons, 0.0, x, u)
    assert not check_complementarity(vm, cons, 0.0, x, u + 0.5)


def test_complementarity_needs_cone():
    with pytest.raises(DomainError):
        check_complementarity(scalar_map(0.0), FixedBox([0.0], [1.0]), 0.0, [0.0], [0.0])


def test_fixed_point_residual_zero_only_at_solution():
    vm, box = scalar_map(-1.0), FixedBox([0.0], [2.0])
    assert fixed_point_residual(vm, box, 0.0, [0.0], [1.0]) == 0.0
    assert fixed_point_residual(vm, box, 0.0, [0.0], [1.5]) > 0.1


# sensitivity -----------------------------------------------------------------


def test_sensitivity_within_certified_bound(rng):
    from nfdqvi.fraccalc import TimeGrid
    from nfdqvi.problem import DynamicsSpec, ProblemInstance, ZeroNonlocal

    vm, cons, _ = random_pqvi(rng, 2)
    dyn = DynamicsSpec(AffineMap([0.0, 0.0], state=-np.eye(2)),
                       AffineMap([0.0, 0.0], state=np.zeros((2, 2)), control=np.zeros((2, 2))))
    p = ProblemInstance(1.0, TimeGrid(1.0, 9), dyn, vm, cons, ZeroNonlocal([0.0, 0.0]))
    cert = derive_constants(p)
    for _ in range(30):
        x1, x2 = rng.uniform(-1, 1, (2, 2))
        ratio, bound = sensitivity_check(vm, cons, cert, 0.0, x1, x2)
        assert ratio <= bound + 1e-6
    assert sensitivity_check(vm, cons, cert, 0.0, x1, x1)[0] == 0.0
