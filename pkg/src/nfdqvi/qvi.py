"""Time-frozen parameterised QVI: projections, solver and certificates.

At a fixed instant ``s`` and state ``x`` the problem is: find ``u`` in
``K(u)`` with ``<G(s, x, u), v - u> >= 0`` for every ``v`` in ``K(u)``.
Equivalently ``u`` is a fixed point of ``u -> P_{K(u)}[u - rho G(s, x, u)]``
for any ``rho > 0``; the solver iterates that map directly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, NonConvergenceError
from .problem import FixedBox, MovingBox

__all__ = [
    "QviSolveReport",
    "project_box",
    "project_moving_set",
    "project_constraint",
    "default_step",
    "fixed_point_residual",
    "vi_gap",
    "solve_pqvi",
    "solve_pqvi_batch",
    "solve_pqvi_nested",
    "sensitivity_check",
    "check_complementarity",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class QviSolveReport:
    solution: np.ndarray
    iterations: int
    residual: float
    step: float
    converged: bool


def project_box(lo, hi, point):
    """Euclidean projection onto ``[lo, hi]`` (componentwise clamp).

    ``lo_j == hi_j`` is allowed and collapses that coordinate to a point.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise DomainError("project_box: lower bound exceeds upper bound")
    return np.clip(np.asarray(point, dtype=float), lo, hi)


def project_moving_set(spec, u, point):
    """Projection onto ``phi(u) + [lo, hi]`` as translation plus clamp."""
    shift = spec.translation(u)
    return shift + project_box(spec.lo, spec.hi, np.asarray(point, dtype=float) - shift)


def project_constraint(constraints, u, point):
    """Projection onto ``K(u)`` for either constraint variant (batched)."""
    if isinstance(constraints, MovingBox):
        return project_moving_set(constraints, u, point)
    return project_box(constraints.lo, constraints.hi, point)


_STEP_POLICIES = ("contraction", "uniqueness", "sensitivity")


def default_step(cert, policy="contraction"):
    """Step size ``rho`` for the projected iteration.

    ``"contraction"`` gives ``eta_G / l_G**2``, which minimises the
    classical factor ``sqrt(1 - 2 rho eta + rho**2 l**2)``. ``"uniqueness"``
    and ``"sensitivity"`` return the step sizes used in the uniqueness and
    Lipschitz-dependence arguments, ``beta_i + 1/eta_G``.
    """
    l_G, eta = float(cert.l_G), float(cert.eta_G)
    if not (l_G > 0 and eta > 0 and math.isfinite(l_G) and math.isfinite(eta)):
        raise DomainError(f"step size needs positive constants, got l_G={l_G}, eta_G={eta}")
    if policy == "contraction":
        return eta / l_G**2
    if policy == "uniqueness":
        return math.sqrt(l_G**2 + eta**2) / (l_G * eta) + 1.0 / eta
    if policy == "sensitivity":
        return math.sqrt(l_G**2 + 0.5 * eta**2) / (l_G * eta) + 1.0 / eta
    raise DomainError(f"unknown step policy {policy!r}; expected one of {_STEP_POLICIES}")


def _step(varmap, constraints, s, x, u, rho):
    return project_constraint(constraints, u, u - rho * varmap(s, x, u))


def fixed_point_residual(varmap, constraints, s, x, u, rho=1.0):
    """``||u - P_{K(u)}[u - rho G(s, x, u)]||`` (per row when batched)."""
    u = np.asarray(u, dtype=float)
    diff = u - _step(varmap, constraints, s, x, u, rho)
    return np.linalg.norm(diff, axis=-1)


def vi_gap(varmap, constraints, s, x, u):
    """``min_v <G(s, x, u), v - u>`` over the vertices ``v`` of ``K(u)``.

    Separable over coordinates for a box. Nonnegative at an exact solution.
    """
    u = np.asarray(u, dtype=float)
    g = varmap(s, x, u)
    shift = constraints.translation(u) if isinstance(constraints, MovingBox) else 0.0
    with np.errstate(invalid="ignore"):
        lo = constraints.lo + shift - u
        hi = constraints.hi + shift - u
        a = np.where(g == 0, 0.0, g * lo)
        b = np.where(g == 0, 0.0, g * hi)
    return np.sum(np.minimum(a, b), axis=-1)


def solve_pqvi(varmap, constraints, s, x, u_init=None, rho=None, tol=DEFAULT_TOL,
               max_iter=DEFAULT_MAX_ITER):
    """Solve the PQVI at one instant by projected fixed-point iteration.

    Iterates ``u <- P_{K(u)}[u - rho G(s, x, u)]`` until successive
    iterates differ by at most ``tol``.

    Raises
    ------
    NonConvergenceError
        When ``max_iter`` is reached; ``last`` and ``residual`` are attached.
    """
    if tol <= 0 or max_iter < 1:
        raise DomainError("tolerance and iteration cap must be positive")
    if rho is None:
        rho = default_step(varmap)
    x = np.asarray(x, dtype=float)
    u = constraints.start_point() if u_init is None else np.array(u_init, dtype=float)
    for it in range(1, max_iter + 1):
        nxt = _step(varmap, constraints, s, x, u, rho)
        change = float(np.linalg.norm(nxt - u))
        u = nxt
        if change <= tol:
            res = float(fixed_point_residual(varmap, constraints, s, x, u, rho))
            return QviSolveReport(u, it, res, rho, True)
    raise NonConvergenceError(
        f"PQVI iteration did not converge in {max_iter} steps (last change {change:.3e})",
        last=u,
        residual=change,
        iterations=max_iter,
    )


def solve_pqvi_batch(varmap, constraints, s, X, U_init=None, rho=None, tol=DEFAULT_TOL,
                     max_iter=DEFAULT_MAX_ITER):
    """Solve independent PQVIs at many ``(s_k, x_k)`` at once.

    Each row is iterated until its own change drops below ``tol`` and is
    then frozen, so every row matches what :func:`solve_pqvi` would return
    from the same start.

    Returns
    -------
    U : ndarray, shape (N, m)
    iterations : ndarray of int, shape (N,)
    """
    if rho is None:
        rho = default_step(varmap)
    s = np.asarray(s, dtype=float)
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    if U_init is None:
        U = np.tile(constraints.start_point(), (N, 1))
    else:
        U = np.array(U_init, dtype=float)
    iters = np.zeros(N, dtype=int)
    active = np.arange(N)
    for it in range(1, max_iter + 1):
        Ua = U[active]
        nxt = _step(varmap, constraints, s[active], X[active], Ua, rho)
        change = np.linalg.norm(nxt - Ua, axis=1)
        U[active] = nxt
        done = change <= tol
        iters[active[done]] = it
        active = active[~done]
        if active.size == 0:
            return U, iters
    node = int(active[0])
    raise NonConvergenceError(
        f"PQVI iteration did not converge in {max_iter} steps at node {node}",
        last=U,
        residual=float(np.max(change)),
        iterations=max_iter,
        node=node,
    )


def solve_pqvi_nested(varmap, constraints, s, x, u_init=None, rho=None, tol=1e-12,
                      max_outer=10_000, max_inner=DEFAULT_MAX_ITER):
    """Two-level oracle: fixed point of ``u_hat -> SOL(VI on K(u_hat))``.

    The inner problem is a VI on the frozen box ``K(u_hat)``, solved by
    projected iteration; the outer loop updates ``u_hat``. Slow, meant for
    cross-checking :func:`solve_pqvi` on small instances.
    """
    if rho is None:
        rho = default_step(varmap)
    x = np.asarray(x, dtype=float)
    u_hat = constraints.start_point() if u_init is None else np.array(u_init, dtype=float)
    for _ in range(max_outer):
        frozen = FixedBox(constraints.lo + constraints.translation(u_hat),
                          constraints.hi + constraints.translation(u_hat)) \
            if isinstance(constraints, MovingBox) else constraints
        inner = solve_pqvi(varmap, frozen, s, x, u_hat, rho, tol, max_inner).solution
        if np.linalg.norm(inner - u_hat) <= tol:
            return inner
        u_hat = inner
    raise NonConvergenceError("nested PQVI oracle did not converge", last=u_hat)


def sensitivity_check(varmap, constraints, cert, s, x1, x2, rho=None, tol=DEFAULT_TOL,
                      max_iter=DEFAULT_MAX_ITER):
    """Measured ``||u1 - u2|| / ||x1 - x2||`` next to the certified bound.

    Returns ``(ratio, bound)``; ``ratio`` is 0 when ``x1 == x2``.
    """
    r1 = solve_pqvi(varmap, constraints, s, x1, None, rho, tol, max_iter)
    r2 = solve_pqvi(varmap, constraints, s, x2, r1.solution, rho, tol, max_iter)
    dx = float(np.linalg.norm(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)))
    du = float(np.linalg.norm(r1.solution - r2.solution))
    ratio = 0.0 if dx == 0.0 else du / dx
    return ratio, float(cert.sensitivity)


def check_complementarity(varmap, constraints, s, x, u, tol=1e-8):
    """Complementarity form for cone-based sets ``K(u) = phi(u) + R^m_+``.

    Checks ``G >= -tol`` (dual-cone membership), ``u - phi(u) >= -tol``
    and ``|<G, u - phi(u)>| <= tol``.
    """
    if not constraints.is_cone:
        raise DomainError("complementarity form needs the nonnegative orthant as base set")
    u = np.asarray(u, dtype=float)
    g = varmap(s, x, u)
    disp = u - constraints.translation(u)
    return bool(
        np.all(g >= -tol) and np.all(disp >= -tol) and abs(float(np.dot(g, disp))) <= tol
    )
