import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import scalar_problem
from nfdqvi.exceptions import CertificationError, ConfigError, NonConvergenceError, ShapeError
from nfdqvi.fraccalc import TimeGrid, mittag_leffler
from nfdqvi.problem import AffineMap, DynamicsSpec, MeanScaled, PointCombination, derive_constants
from nfdqvi.solver import (
    SolverConfig,
    bielecki_distance,
    march_solve,
    picard_solve,
    residual_check,
    solve,
)


def zero_dynamics(p):
    dyn = DynamicsSpec(AffineMap([0.0], state=[[0.0]]), p.dynamics.g)
    return replace(p, dynamics=dyn)


# Bielecki distance -----------------------------------------------------------


def test_bielecki_examples():
    grid = TimeGrid(1.0, 11)
    x = np.random.default_rng(0).standard_normal((11, 2))
    assert bielecki_distance(grid, x, x, 3.0) == 0.0
    y = x + np.array([0.6, 0.8])
    assert bielecki_distance(grid, x, y, 1.0) == pytest.approx(1.0)
    z = x.copy()
    z[-1, 0] += 2.0
    assert bielecki_distance(grid, x, z, 0.0) == pytest.approx(2.0)
    assert bielecki_distance(grid, x, z, 1.0) == pytest.approx(2.0 / math.e)
    with pytest.raises(ShapeError):
        bielecki_distance(grid, x, x[:5], 1.0)


# closed forms ----------------------------------------------------------------


@pytest.mark.parametrize("method", ["picard", "march"])
def test_exponential_decay(method):
    p = scalar_problem(1.0, 1025)
    traj = solve(p, SolverConfig(method=method))
    assert np.max(np.abs(traj.x[:, 0] - np.exp(-traj.s))) < 1e-6


@pytest.mark.parametrize("method", ["picard", "march"])
def test_mittag_leffler_relaxation(method):
    p = scalar_problem(0.5, 1025)
    traj = solve(p, SolverConfig(method=method))
    ref = np.array([mittag_leffler(0.5, -(t**0.5)) for t in traj.s])
    assert np.max(np.abs(traj.x[:, 0] - ref)) < 1e-3
    assert traj.x[-1, 0] == pytest.approx(0.427584, abs=1e-3)


@pytest.mark.parametrize("method", ["picard", "march"])
def test_mean_scaled_fixed_point(method):
    p = zero_dynamics(scalar_problem(0.7, 65, nonlocal_=MeanScaled([0.5], [1.0])))
    traj = solve(p, SolverConfig(method=method))
    np.testing.assert_allclose(traj.x[:, 0], 2.0, atol=1e-8)


@pytest.mark.parametrize("method", ["picard", "march"])
def test_point_combination_fixed_point(method):
    p = zero_dynamics(scalar_problem(0.7, 65, nonlocal_=PointCombination([0.3], [0.5], [1.0])))
    traj = solve(p, SolverConfig(method=method))
    np.testing.assert_allclose(traj.x[:, 0], 1.0 / 0.7, atol=1e-8)


def test_march_zero_nonlocal_single_pass():
    traj = march_solve(scalar_problem(0.6, 65))
    assert traj.iterations == 1


# residuals -------------------------------------------------------------------


def test_residuals_after_solve():
    p = scalar_problem(0.6, 129, nonlocal_=MeanScaled([0.3], [1.0]), fx=-0.3)
    cfg = SolverConfig()
    traj = picard_solve(p, cfg)
    res = residual_check(p, traj)
    assert res.integral <= 10 * cfg.max_tolerance
    assert res.qvi <= cfg.qvi_tol
    assert res.nonlocal_ <= 10 * cfg.max_tolerance
    assert traj.integral_residual == pytest.approx(res.integral, abs=1e-14)


def test_residual_detects_node_perturbation():
    p = scalar_problem(0.6, 129)
    traj = picard_solve(p)
    x = traj.x.copy()
    x[40] += 0.1
    assert residual_check(p, replace(traj, x=x)).integral >= 0.05


def test_exact_solution_residual_is_second_order():
    res = []
    for N in (65, 129, 257):
        p = scalar_problem(1.0, N)
        traj = picard_solve(p)
        exact = replace(traj, x=np.exp(-traj.s)[:, None])
        res.append(residual_check(p, exact).integral)
    assert res[0] / res[1] > 3.5 and res[1] / res[2] > 3.5


# contraction and determinism --------------------------------------------------


def test_sweep_distances_contract():
    p = scalar_problem(0.6, 129, nonlocal_=MeanScaled([0.3], [1.0]), fx=-0.3)
    cert = derive_constants(p)
    traj = picard_solve(p, cert=cert)
    d = np.array(traj.distances)
    d = d[d > 1e-13]
    ratios = d[2:] / d[1:-1]
    assert np.all(ratios <= cert.lam + 0.05)


def test_solvers_agree():
    rule = PointCombination([0.2, -0.1], [0.25, 0.75], [1.0])
    p = scalar_problem(0.6, 129, nonlocal_=rule, fx=-0.2)
    cfg = SolverConfig()
    a = picard_solve(p, cfg)
    b = march_solve(p, cfg)
    assert np.max(np.abs(a.x - b.x)) <= 10 * cfg.max_tolerance
    assert np.max(np.abs(a.u - b.u)) <= 10 * cfg.max_tolerance


def test_repeat_runs_are_identical():
    p = scalar_problem(0.6, 129, nonlocal_=MeanScaled([0.3], [1.0]), fx=-0.3)
    a, b = picard_solve(p), picard_solve(p)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.u, b.u)


# failure modes ---------------------------------------------------------------


def test_uncertified_instance_refused_unless_allowed():
    p = scalar_problem(0.6, 33, nonlocal_=MeanScaled([0.99], [1.0]), fx=-0.3)
    assert not derive_constants(p).all_pass
    with pytest.raises(CertificationError):
        picard_solve(p)
    traj = picard_solve(p, SolverConfig(allow_uncertified=True))
    assert np.all(np.isfinite(traj.x))


def test_sweep_cap_raises():
    p = scalar_problem(0.6, 33, nonlocal_=MeanScaled([0.3], [1.0]), fx=-0.3)
    with pytest.raises(NonConvergenceError) as info:
        picard_solve(p, SolverConfig(picard_max_sweeps=2))
    assert info.value.iterations == 2


@pytest.mark.parametrize("kwargs", [{"picard_tol": 0.0}, {"method": "euler"}, {"rho": -1.0},
                                    {"qvi_max_iter": 0}, {"gamma": 0.0}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SolverConfig(**kwargs)
