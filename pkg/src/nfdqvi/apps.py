"""Two applications reduced to :class:`~nfdqvi.problem.ProblemInstance`.

* A multi-agent optimisation problem with quadratic costs, whose general
  Nash equilibria are the solutions of the reduced system.
* A price control problem with affine supply and demand, whose market
  equilibria are the solutions of the reduced system.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, as_vector, check_positive, min_sym_eig
from .exceptions import ConfigError
from .fraccalc import TimeGrid
from .problem import (
    AffineMap,
    DynamicsSpec,
    MeanScaled,
    MovingBox,
    PointCombination,
    ProblemInstance,
    VariationalMapSpec,
    derive_constants,
)

__all__ = [
    "MaopSpec",
    "PcpSpec",
    "maop_to_nfdqvi",
    "check_nash",
    "pcp_to_nfdqvi",
    "check_market_equilibrium",
    "pcp_l1_constant",
    "verify_A1_A4",
    "rho_feasibility",
    "gamma_star",
]


def _zero_diag(mat, field):
    if np.any(np.diag(mat) != 0):
        raise ConfigError("diagonal must be zero (no self-dependence)", field)


def _time_fields(q, horizon, nodes):
    if not 0.0 < q <= 1.0:
        raise ConfigError(f"order must lie in (0, 1], got {q}", "q")
    check_positive(horizon, "horizon")
    if int(nodes) != nodes or nodes < 3:
        raise ConfigError(f"need at least 3 grid nodes, got {nodes}", "nodes")


# ---------------------------------------------------------------------------
# multi-agent optimisation


@dataclass(frozen=True, eq=False)
class MaopSpec:
    """Quadratic multi-agent problem with moving strategy sets.

    Agent ``j`` minimises
    ``0.5 alpha_j u_j^2 + u_j (beta_j x_j + sum_{i != j} coupling_ji u_i + linear_j)``
    over ``K_j(u_{-j}) = phi_j(u_{-j}) + [lower_j, upper_j]`` with
    ``phi(u) = phi_matrix @ u + phi_offset``. Agent ``j``'s state follows
    ``D^q x_j = f0_j + fx_j x_j + g0_j + gx_j x_j + gu_j u_j`` with
    ``x_j(0) = x0_j + a_j * mean(x_j)``.

    ``state_coupling`` optionally replaces ``diag(beta)`` by a full matrix
    so that costs may depend on every agent's state.
    """

    alpha: np.ndarray
    beta: np.ndarray
    coupling: np.ndarray
    phi_matrix: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    a: np.ndarray
    x0: np.ndarray
    linear: np.ndarray = None
    phi_offset: np.ndarray = None
    f0: np.ndarray = None
    fx: np.ndarray = None
    g0: np.ndarray = None
    gx: np.ndarray = None
    gu: np.ndarray = None
    state_coupling: np.ndarray = None
    q: float = 1.0
    horizon: float = 1.0
    nodes: int = 257

    def __post_init__(self):
        alpha = as_vector(self.alpha, "alpha")
        n = alpha.shape[0]
        if np.any(alpha <= 0):
            raise ConfigError("every alpha_j must be positive (convex own cost)", "alpha")
        vec = {"beta": self.beta, "a": self.a, "x0": self.x0}
        for name in ("linear", "phi_offset", "f0", "fx", "g0", "gx", "gu"):
            vec[name] = np.zeros(n) if getattr(self, name) is None else getattr(self, name)
        object.__setattr__(self, "alpha", alpha)
        for name, value in vec.items():
            object.__setattr__(self, name, as_vector(value, name, n))
        lo = as_vector(self.lower, "lower", n, allow_inf=True)
        hi = as_vector(self.upper, "upper", n, allow_inf=True)
        if np.any(lo >= hi):
            raise ConfigError("strategy interval needs lower < upper", "upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        for name in ("coupling", "phi_matrix"):
            mat = as_matrix(getattr(self, name), name, (n, n))
            _zero_diag(mat, name)
            object.__setattr__(self, name, mat)
        if self.state_coupling is not None:
            object.__setattr__(
                self, "state_coupling", as_matrix(self.state_coupling, "state_coupling", (n, n))
            )
        amax = float(np.max(np.abs(self.a)))
        if not 0.0 < amax < 1.0:
            raise ConfigError(f"(H5) needs 0 < max|a_j| < 1, got {amax}", "a")
        _time_fields(self.q, self.horizon, self.nodes)
        eta = min_sym_eig(self.gradient_matrix)
        if eta <= 0:
            raise ConfigError(
                f"assembled gradient map is not strongly monotone (eta = {eta:.6g})", "coupling"
            )

    @property
    def n(self):
        return self.alpha.shape[0]

    @property
    def gradient_matrix(self):
        """``A`` with ``alpha`` on the diagonal and ``coupling`` off it."""
        return np.diag(self.alpha) + self.coupling

    @property
    def state_matrix(self):
        return np.diag(self.beta) if self.state_coupling is None else self.state_coupling

    def gradients(self, x, u):
        """Stacked own-strategy gradients ``d Theta_j / d u_j`` (batched)."""
        return u @ self.gradient_matrix.T + x @ self.state_matrix.T + self.linear

    def intervals(self, u):
        """Endpoints of ``K_j(u_{-j})`` for every agent (batched)."""
        shift = u @ self.phi_matrix.T + self.phi_offset
        return shift + self.lower, shift + self.upper


def maop_to_nfdqvi(spec):
    """Reduce a :class:`MaopSpec` to a problem instance.

    ``G(x, u)`` stacks the own-strategy gradients, ``K`` is the product of
    the moving intervals and the nonlocal rule is the scaled mean.
    """
    dyn = DynamicsSpec(
        f=AffineMap(spec.f0, state=np.diag(spec.fx)),
        g=AffineMap(spec.g0, state=np.diag(spec.gx), control=np.diag(spec.gu)),
    )
    varmap = VariationalMapSpec(spec.gradient_matrix, spec.state_matrix, c0=spec.linear)
    cons = MovingBox(AffineMap(spec.phi_offset, control=spec.phi_matrix), spec.lower, spec.upper)
    grid = TimeGrid(spec.horizon, int(spec.nodes))
    return ProblemInstance(spec.q, grid, dyn, varmap, cons, MeanScaled(spec.a, spec.x0))


def _first_order_ok(grad, u, lo, hi, tol):
    """One-dimensional minimum principle at both interval endpoints."""
    inside = (u >= lo - tol) & (u <= hi + tol)
    with np.errstate(invalid="ignore"):
        at_lo = np.where(np.isfinite(lo), grad * (lo - u), 0.0)
        at_hi = np.where(np.isfinite(hi), grad * (hi - u), 0.0)
    # an infinite endpoint demands the gradient not point towards it
    at_lo = np.where(np.isinf(lo) & (grad > tol), -np.inf, at_lo)
    at_hi = np.where(np.isinf(hi) & (grad < -tol), -np.inf, at_hi)
    return inside & (at_lo >= -tol) & (at_hi >= -tol)


def check_nash(spec, traj, tol=1e-6):
    """True when every agent's control is optimal at every node.

    For each agent the first-order condition
    ``<dTheta_j/du_j, v_j - u_j> >= -tol`` is tested at both endpoints of
    ``K_j(u_{-j}(s))``; by convexity in ``u_j`` this certifies that ``u_j``
    minimises the agent's cost given the others.
    """
    x, u = np.asarray(traj.x), np.asarray(traj.u)
    grad = spec.gradients(x, u)
    lo, hi = spec.intervals(u)
    return bool(np.all(_first_order_ok(grad, u, lo, hi, tol)))


# ---------------------------------------------------------------------------
# price control


@dataclass(frozen=True, eq=False)
class PcpSpec:
    """Affine supply/demand market with a moving price corridor.

    Supply ``S(u, x) = P u + sigma x + p`` and demand
    ``D(u, x) = R u + delta x + r`` for ``m`` prices ``u`` and an outside
    force ``x`` in ``R^n`` with ``D^q x = chi(s, x) + theta(s, x, u)`` and
    ``x(0) = x0 + sum_i iota_i x(t_i)``. Price ``j`` lives in
    ``[phi_j(u_{-j}) + c_j, phi_j(u_{-j}) + d_j]``.
    """

    P: np.ndarray
    R: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    p: np.ndarray
    r: np.ndarray
    phi_matrix: np.ndarray
    c: np.ndarray
    d: np.ndarray
    chi: AffineMap
    theta: AffineMap
    iota: np.ndarray
    times: np.ndarray
    x0: np.ndarray
    phi_offset: np.ndarray = None
    q: float = 1.0
    horizon: float = 1.0
    nodes: int = 257

    def __post_init__(self):
        P = as_matrix(self.P, "P")
        m = P.shape[0]
        if P.shape != (m, m):
            raise ConfigError(f"P must be square, got {P.shape}", "P")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", as_matrix(self.R, "R", (m, m)))
        x0 = as_vector(self.x0, "x0")
        n = x0.shape[0]
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "sigma", as_matrix(self.sigma, "sigma", (m, n)))
        object.__setattr__(self, "delta", as_matrix(self.delta, "delta", (m, n)))
        for name in ("p", "r", "c", "d"):
            object.__setattr__(self, name, as_vector(getattr(self, name), name, m))
        offset = np.zeros(m) if self.phi_offset is None else self.phi_offset
        object.__setattr__(self, "phi_offset", as_vector(offset, "phi_offset", m))
        phi = as_matrix(self.phi_matrix, "phi_matrix", (m, m))
        _zero_diag(phi, "phi_matrix")
        object.__setattr__(self, "phi_matrix", phi)
        if np.any(self.c >= self.d):
            raise ConfigError("price corridor needs c_j < d_j", "d")
        iota = as_vector(self.iota, "iota")
        object.__setattr__(self, "iota", iota)
        object.__setattr__(self, "times", as_vector(self.times, "times", iota.shape[0]))
        total = float(np.sum(np.abs(iota)))
        if not 0.0 < total < 1.0:
            raise ConfigError(f"(H5) needs 0 < sum|iota_i| < 1, got {total}", "iota")
        _time_fields(self.q, self.horizon, self.nodes)
        for name, amap in (("chi", self.chi), ("theta", self.theta)):
            if amap.out_dim != n or amap.state_dim not in (None, n):
                raise ConfigError(f"must map into R^{n} with {n} state columns", name)
        if self.chi.control is not None:
            raise ConfigError("chi may not depend on prices", "chi")
        if self.theta.control_dim not in (None, m):
            raise ConfigError(f"control block must have {m} columns", "theta")
        if self.eta_sd <= 0:
            raise ConfigError(
                f"supply minus demand is not strongly monotone (eta_SD = {self.eta_sd:.6g})", "P"
            )

    @property
    def m(self):
        return self.P.shape[0]

    @property
    def n(self):
        return self.x0.shape[0]

    @property
    def eta_sd(self):
        return min_sym_eig(self.P - self.R)

    def supply(self, x, u):
        return u @ self.P.T + x @ self.sigma.T + self.p

    def demand(self, x, u):
        return u @ self.R.T + x @ self.delta.T + self.r

    def corridor(self, u):
        shift = u @ self.phi_matrix.T + self.phi_offset
        return shift + self.c, shift + self.d


def pcp_to_nfdqvi(spec):
    """Reduce a :class:`PcpSpec` to a problem instance with ``G = S - D``."""
    varmap = VariationalMapSpec(spec.P - spec.R, spec.sigma - spec.delta, c0=spec.p - spec.r)
    cons = MovingBox(AffineMap(spec.phi_offset, control=spec.phi_matrix), spec.c, spec.d)
    grid = TimeGrid(spec.horizon, int(spec.nodes))
    dyn = DynamicsSpec(f=spec.chi, g=spec.theta)
    nonlocal_ = PointCombination(spec.iota, spec.times, spec.x0)
    return ProblemInstance(spec.q, grid, dyn, varmap, cons, nonlocal_)


def check_market_equilibrium(spec, traj, tol=1e-6):
    """Three-case equilibrium condition at every node and commodity.

    Excess supply ``S_j - D_j`` must be ``<= tol`` at the corridor ceiling,
    ``>= -tol`` at the floor and within ``tol`` of zero strictly inside.
    """
    x, u = np.asarray(traj.x), np.asarray(traj.u)
    excess = spec.supply(x, u) - spec.demand(x, u)
    lo, hi = spec.corridor(u)
    at_hi = np.abs(u - hi) <= tol
    at_lo = np.abs(u - lo) <= tol
    inside = (u >= lo - tol) & (u <= hi + tol)
    ok = np.where(
        at_hi & at_lo,
        True,
        np.where(at_hi, excess <= tol, np.where(at_lo, excess >= -tol, np.abs(excess) <= tol)),
    )
    return bool(np.all(ok & inside))


def _row_norms(mat):
    return np.linalg.norm(np.atleast_2d(mat), axis=1)


def pcp_l1_constant(l_norm1, lip_sum, eta_sd):
    """The corridor condition ``L_1`` in 1-norm constants.

    ``2 (|l|_1^2 / eta^2) (S sqrt(4 S^2 + 2 eta^2) + 2 S^2 + eta^2)`` with
    ``S = |l_S|_1 + |l_D|_1``.
    """
    S, eta = float(lip_sum), float(eta_sd)
    return 2.0 * (l_norm1**2 / eta**2) * (S * math.sqrt(4 * S**2 + 2 * eta**2) + 2 * S**2 + eta**2)


def verify_A1_A4(spec):
    """Check the price-control assumptions with 1-norm constants.

    Returns a dict with the constants, per-assumption verdicts and, for
    comparison, the 2-norm certificate of the reduced instance.

    ``l_Sj = max(|P_j|, |sigma_j|)`` bounds
    ``|S_j(u1, x1) - S_j(u2, x2)| <= l_Sj (|x1 - x2| + |u1 - u2|)``; likewise
    for demand. ``l_j`` is the Euclidean norm of row ``j`` of the corridor
    translation.
    """
    l_S = np.maximum(_row_norms(spec.P), _row_norms(spec.sigma))
    l_D = np.maximum(_row_norms(spec.R), _row_norms(spec.delta))
    l = _row_norms(spec.phi_matrix)
    lip_sum = float(l_S.sum() + l_D.sum())
    eta = spec.eta_sd
    L1 = pcp_l1_constant(float(l.sum()), lip_sum, eta)
    l_theta = max(spec.theta.lipschitz("x"), spec.theta.lipschitz("u"))
    l_chi = spec.chi.lipschitz("x")
    cert = derive_constants(pcp_to_nfdqvi(spec))
    verdicts = {
        "A1": bool(eta > 0 and math.isfinite(lip_sum)),
        "A2": bool(np.all(spec.c < spec.d) and L1 < 1.0),
        "A3": bool(math.isfinite(l_theta)),
        "A4": bool(math.isfinite(l_chi)),
        "iota": bool(0.0 < float(np.sum(np.abs(spec.iota))) < 1.0),
    }
    return {
        "l_S": l_S,
        "l_D": l_D,
        "l": l,
        "lip_sum_1norm": lip_sum,
        "l_norm1": float(l.sum()),
        "eta_sd": eta,
        "L1": L1,
        "l_theta": l_theta,
        "l_chi": l_chi,
        "verdicts": verdicts,
        "all_pass": all(verdicts.values()),
        "certificate": cert,
    }


# ---------------------------------------------------------------------------
# gamma feasibility for the scaled-mean rule


def rho_feasibility(gamma, T, a_max):
    """``exp(gamma T) - (T / a_max) gamma - 1``; negative means ``l_psi < 1``."""
    check_positive(a_max, "a_max")
    return math.exp(gamma * T) - (T / a_max) * gamma - 1.0


def gamma_star(T, a_max):
    """Minimiser ``ln(1 / a_max) / T`` of :func:`rho_feasibility`."""
    if not 0.0 < a_max < 1.0:
        raise ConfigError(f"need 0 < max|a_j| < 1, got {a_max}", "a")
    return math.log(1.0 / a_max) / T
