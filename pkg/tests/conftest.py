import json
from importlib import resources

import numpy as np
import pytest

from nfdqvi.config import parse_document
from nfdqvi.fraccalc import TimeGrid
from nfdqvi.problem import (
    AffineMap,
    DynamicsSpec,
    FixedBox,
    ProblemInstance,
    VariationalMapSpec,
    ZeroNonlocal,
)


def scalar_problem(q, N, *, fx=-1.0, nonlocal_=None, T=1.0):
    """D^q x = fx * x with a decoupled QVI; x(0) = 1 unless overridden."""
    dyn = DynamicsSpec(
        AffineMap([0.0], state=[[fx]]),
        AffineMap([0.0], state=[[0.0]], control=[[0.0]]),
    )
    vm = VariationalMapSpec([[1.0]], [[0.0]])
    return ProblemInstance(
        q, TimeGrid(T, N), dyn, vm, FixedBox([-1.0], [1.0]), nonlocal_ or ZeroNonlocal([1.0])
    )


def load_demo(name):
    text = resources.files("nfdqvi.data").joinpath(name).read_text("utf-8")
    return parse_document(json.loads(text)).obj


@pytest.fixture(scope="session")
def maop_spec():
    return load_demo("demo_maop.json")


@pytest.fixture(scope="session")
def pcp_spec():
    return load_demo("demo_pcp.json")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grid_search_pqvi(varmap, constraints, s, x, pitch=1e-3):
    """Exhaustive oracle: the lattice point of K's bounding region with the
    smallest fixed-point residual (unit step)."""
    lo = constraints.lo.copy()
    hi = constraints.hi.copy()
    if hasattr(constraints, "phi"):
        # any feasible u has |u| <= (box + offset) / (1 - ||M||_inf)
        rows = np.abs(constraints.matrix).sum(axis=1)
        radius = (np.max(np.abs(np.r_[lo, hi])) + np.max(np.abs(constraints.phi.offset)))
        reach = rows * radius / (1.0 - rows.max())
        lo = lo + constraints.phi.offset - reach
        hi = hi + constraints.phi.offset + reach
    axes = [np.arange(a, b + pitch / 2, pitch) for a, b in zip(lo, hi)]
    U = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    X = np.broadcast_to(np.asarray(x, dtype=float), (U.shape[0], len(x)))
    step = U - varmap(s, X, U)
    if hasattr(constraints, "phi"):
        shift = constraints.translation(U)
        proj = shift + np.clip(step - shift, constraints.lo, constraints.hi)
    else:
        proj = np.clip(step, constraints.lo, constraints.hi)
    res = np.linalg.norm(U - proj, axis=1)
    return U[np.argmin(res)]


def random_pqvi(rng, m, *, moving=True, cone=False):
    """Certified random PQVI of size m (l_K small, A strongly monotone)."""
    from nfdqvi.problem import FixedBox, MovingBox

    M = rng.uniform(-0.4, 0.4, size=(m, m))
    A = M @ M.T + np.diag(rng.uniform(1.0, 2.0, m)) + 0.3 * (M - M.T)
    B = rng.uniform(-1.0, 1.0, size=(m, 2))
    vm = VariationalMapSpec(A, B, c0=rng.uniform(-1.0, 1.0, m))
    lo = np.zeros(m) if cone else -rng.uniform(0.2, 0.6, m)
    hi = np.full(m, np.inf) if cone else rng.uniform(0.2, 0.6, m)
    if moving and m > 1:
        phi = rng.uniform(-0.1, 0.1, size=(m, m))
        np.fill_diagonal(phi, 0.0)
        cons = MovingBox(AffineMap(rng.uniform(-0.1, 0.1, m), control=phi), lo, hi)
    else:
        cons = FixedBox(lo, hi)
    x = rng.uniform(-1.0, 1.0, 2)
    return vm, cons, x


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record and print a one-line pass/fail verdict for an acceptance criterion."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}"
        if detail:
            line += f": {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
