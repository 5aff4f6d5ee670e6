"""Problem data model and constant certification.

Every map in a :class:`ProblemInstance` is affine, so each Lipschitz and
monotonicity constant used by the existence and stability results can be
computed exactly from the data (induced 2-norms and eigenvalues).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from ._validation import as_matrix, as_vector, check_positive, min_sym_eig, spectral_norm
from .exceptions import CertificationError, ConfigError, ShapeError
from .fraccalc import TimeGrid, gamma_fn

__all__ = [
    "AffineMap",
    "DynamicsSpec",
    "VariationalMapSpec",
    "GenericVariationalMap",
    "FixedBox",
    "MovingBox",
    "ZeroNonlocal",
    "MeanScaled",
    "PointCombination",
    "ProblemInstance",
    "ConstantCertificate",
    "pqvi_uniqueness_lhs",
    "contraction_constant",
    "kappa_constant",
    "sensitivity_bound",
    "derive_constants",
    "feasible_gamma",
    "lambda_of_gamma",
    "check_hypotheses",
    "audit_lipschitz",
]


# ---------------------------------------------------------------------------
# affine building blocks


@dataclass(frozen=True, eq=False)
class AffineMap:
    """Affine function ``offset + s*time + state @ x + control @ u``.

    Blocks that are ``None`` mean the map does not depend on that argument.
    Batched evaluation accepts ``s`` of shape (N,), ``x`` of shape (N, n)
    and ``u`` of shape (N, m).
    """

    offset: np.ndarray
    state: np.ndarray = None
    control: np.ndarray = None
    time: np.ndarray = None

    def __post_init__(self):
        offset = as_vector(self.offset, "offset")
        d = offset.shape[0]
        object.__setattr__(self, "offset", offset)
        if self.state is not None:
            object.__setattr__(self, "state", as_matrix(self.state, "state", (d, None)))
        if self.control is not None:
            object.__setattr__(self, "control", as_matrix(self.control, "control", (d, None)))
        if self.time is not None:
            object.__setattr__(self, "time", as_vector(self.time, "time", d))

    @classmethod
    def zero(cls, out_dim, *, state_dim=None, control_dim=None):
        return cls(
            offset=np.zeros(out_dim),
            state=None if state_dim is None else np.zeros((out_dim, state_dim)),
            control=None if control_dim is None else np.zeros((out_dim, control_dim)),
        )

    @property
    def out_dim(self):
        return self.offset.shape[0]

    @property
    def state_dim(self):
        return None if self.state is None else self.state.shape[1]

    @property
    def control_dim(self):
        return None if self.control is None else self.control.shape[1]

    def __call__(self, s=0.0, x=None, u=None):
        out = self.offset
        if self.time is not None:
            out = out + np.multiply.outer(np.asarray(s, dtype=float), self.time)
        if self.state is not None:
            out = out + np.asarray(x, dtype=float) @ self.state.T
        if self.control is not None:
            out = out + np.asarray(u, dtype=float) @ self.control.T
        batch = [np.shape(v)[0] for v, nd in ((s, 1), (x, 2), (u, 2)) if v is not None and np.ndim(v) == nd]
        if batch and out.ndim == 1:
            out = np.broadcast_to(out, (batch[0], self.out_dim))
        return np.array(out, dtype=float)

    def lipschitz(self, arg):
        block = {"x": self.state, "u": self.control, "s": self.time}[arg]
        if block is None:
            return 0.0
        return spectral_norm(np.atleast_2d(block).T if arg == "s" else block)


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    """State dynamics ``f(s, x)`` and control coupling ``g(s, x, u)``."""

    f: AffineMap
    g: AffineMap

    def __post_init__(self):
        if self.f.control is not None:
            raise ConfigError("f may not depend on the control", "dynamics.f")
        if self.f.out_dim != self.g.out_dim:
            raise ConfigError(
                f"f and g output sizes differ ({self.f.out_dim} vs {self.g.out_dim})", "dynamics"
            )
        n = self.f.out_dim
        for name, amap in (("f", self.f), ("g", self.g)):
            if amap.state_dim not in (None, n):
                raise ConfigError(f"state block must have {n} columns", f"dynamics.{name}")

    @property
    def state_dim(self):
        return self.f.out_dim

    @property
    def l_f(self):
        return self.f.lipschitz("x")

    @property
    def l_g(self):
        return max(self.g.lipschitz("x"), self.g.lipschitz("u"))

    def rhs(self, s, x, u):
        return self.f(s, x) + self.g(s, x, u)


@dataclass(frozen=True, eq=False)
class VariationalMapSpec:
    """Affine variational map ``G(s, x, u) = A u + B x + c0 + c1 s``.

    ``lipschitz`` optionally declares a joint Lipschitz constant; it must
    dominate each block norm.
    """

    A: np.ndarray
    B: np.ndarray
    c0: np.ndarray = None
    c1: np.ndarray = None
    lipschitz: float = None

    certified = True

    def __post_init__(self):
        A = as_matrix(self.A, "varmap.A")
        m = A.shape[0]
        if A.shape != (m, m):
            raise ConfigError(f"A must be square, got {A.shape}", "varmap.A")
        B = as_matrix(self.B, "varmap.B", (m, None))
        c0 = np.zeros(m) if self.c0 is None else as_vector(self.c0, "varmap.c0", m)
        c1 = np.zeros(m) if self.c1 is None else as_vector(self.c1, "varmap.c1", m)
        for name, val in (("A", A), ("B", B), ("c0", c0), ("c1", c1)):
            object.__setattr__(self, name, val)
        floor = max(spectral_norm(A), spectral_norm(B), float(np.linalg.norm(c1)))
        if self.lipschitz is not None:
            declared = check_positive(self.lipschitz, "varmap.lipschitz")
            if declared < floor * (1 - 1e-12):
                raise ConfigError(
                    f"declared Lipschitz constant {declared} below block norm {floor}",
                    "varmap.lipschitz",
                )

    @property
    def control_dim(self):
        return self.A.shape[0]

    @property
    def state_dim(self):
        return self.B.shape[1]

    @property
    def l_G(self):
        if self.lipschitz is not None:
            return float(self.lipschitz)
        return max(spectral_norm(self.A), spectral_norm(self.B), float(np.linalg.norm(self.c1)))

    @property
    def eta_G(self):
        return min_sym_eig(self.A)

    def __call__(self, s, x, u):
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        x = np.asarray(x, dtype=float)
        out = u @ self.A.T + x @ self.B.T + self.c0
        return out + (np.multiply.outer(s, self.c1) if s.ndim else s * self.c1)


class GenericVariationalMap:
    """User-supplied ``G(s, x, u)`` with declared constants.

    Not certified: the declared ``l_G`` and ``eta_G`` are taken on trust and
    the solvers run in best-effort mode. ``func`` must accept batched
    arguments the same way :class:`VariationalMapSpec` does.
    """

    certified = False

    def __init__(self, func, control_dim, state_dim, l_G, eta_G):
        self.func = func
        self._m = int(control_dim)
        self._n = int(state_dim)
        self.l_G = float(l_G)
        self.eta_G = float(eta_G)

    @property
    def control_dim(self):
        return self._m

    @property
    def state_dim(self):
        return self._n

    def __call__(self, s, x, u):
        return np.asarray(self.func(s, x, u), dtype=float)


# ---------------------------------------------------------------------------
# constraint sets


def _check_box(lo, hi, where):
    lo = as_vector(lo, f"{where}.lo", allow_inf=True)
    hi = as_vector(hi, f"{where}.hi", lo.shape[0], allow_inf=True)
    if np.any(lo >= hi):
        j = int(np.argmax(lo >= hi))
        raise ConfigError(f"lower bound {lo[j]} not below upper bound {hi[j]} at index {j}", where)
    if np.any(lo == np.inf) or np.any(hi == -np.inf):
        raise ConfigError("box bounds must be nonempty", where)
    return lo, hi


def _box_start(lo, hi):
    start = np.zeros_like(lo)
    both = np.isfinite(lo) & np.isfinite(hi)
    start[both] = 0.5 * (lo[both] + hi[both])
    start[np.isfinite(lo) & ~both] = lo[np.isfinite(lo) & ~both]
    start[np.isfinite(hi) & ~both] = hi[np.isfinite(hi) & ~both]
    return start


@dataclass(frozen=True, eq=False)
class FixedBox:
    """Constant box ``[lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _check_box(self.lo, self.hi, "constraints")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.shape[0]

    @property
    def l_K(self):
        return 0.0

    def translation(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def start_point(self):
        return _box_start(self.lo, self.hi)

    @property
    def is_cone(self):
        return bool(np.all(self.lo == 0) and np.all(self.hi == np.inf))


@dataclass(frozen=True, eq=False)
class MovingBox:
    """Translated box ``K(u) = phi(u) + [lo, hi]``.

    ``phi`` is an :class:`AffineMap` of ``u`` only whose ``j``-th component
    does not depend on ``u_j``.
    """

    phi: AffineMap
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _check_box(self.lo, self.hi, "constraints")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        m = lo.shape[0]
        phi = self.phi
        if phi.out_dim != m or phi.state is not None or phi.time is not None:
            raise ConfigError("phi must map R^m to R^m and depend on u only", "constraints.phi")
        if phi.control is None:
            object.__setattr__(
                self, "phi", AffineMap(offset=phi.offset, control=np.zeros((m, m)))
            )
        elif phi.control.shape != (m, m):
            raise ConfigError(f"phi matrix must be {m}x{m}", "constraints.phi")
        if np.any(np.diag(self.phi.control) != 0):
            raise ConfigError(
                "phi_j may not depend on u_j (diagonal must be zero)", "constraints.phi"
            )

    @property
    def dim(self):
        return self.lo.shape[0]

    @property
    def matrix(self):
        return self.phi.control

    @property
    def l_K(self):
        return spectral_norm(self.phi.control)

    def translation(self, u):
        u = np.asarray(u, dtype=float)
        return u @ self.phi.control.T + self.phi.offset

    def start_point(self):
        return _box_start(self.lo, self.hi)

    @property
    def is_cone(self):
        return bool(np.all(self.lo == 0) and np.all(self.hi == np.inf))


# ---------------------------------------------------------------------------
# nonlocal initial conditions


def _trapezoid_mean(grid, x):
    h = grid.step
    total = h * (x.sum(axis=0) - 0.5 * (x[0] + x[-1]))
    return total / grid.horizon


@dataclass(frozen=True, eq=False)
class ZeroNonlocal:
    """``x(0) = x0``."""

    x0: np.ndarray

    kind = "zero"

    def __post_init__(self):
        object.__setattr__(self, "x0", as_vector(self.x0, "nonlocal.x0"))

    def coefficient_bound(self):
        return 0.0

    def admissible(self):
        return True

    def evaluate(self, grid, x):
        return np.zeros(np.shape(x)[1])

    def lipschitz(self, gamma, T):
        return 0.0

    def gamma_window(self, T):
        return None


@dataclass(frozen=True, eq=False)
class MeanScaled:
    """``x_j(0) = x0_j + a_j * mean_{[0,T]} x_j``."""

    coefficients: np.ndarray
    x0: np.ndarray

    kind = "mean_scaled"

    def __post_init__(self):
        x0 = as_vector(self.x0, "nonlocal.x0")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(
            self, "coefficients", as_vector(self.coefficients, "nonlocal.coefficients", x0.shape[0])
        )

    def coefficient_bound(self):
        return float(np.max(np.abs(self.coefficients)))

    def admissible(self):
        return 0.0 < self.coefficient_bound() < 1.0

    def evaluate(self, grid, x):
        return self.coefficients * _trapezoid_mean(grid, x)

    def lipschitz(self, gamma, T):
        a = self.coefficient_bound()
        gT = gamma * T
        return a * (math.expm1(gT) / gT if gT > 0 else 1.0)

    def gamma_window(self, T):
        a = self.coefficient_bound()
        if not 0.0 < a < 1.0:
            return None
        return math.log(1.0 / a) / T


@dataclass(frozen=True, eq=False)
class PointCombination:
    """``x(0) = x0 + sum_i iota_i x(t_i)`` with anchors on grid nodes."""

    coefficients: np.ndarray
    times: np.ndarray
    x0: np.ndarray

    kind = "point_combination"

    def __post_init__(self):
        object.__setattr__(self, "x0", as_vector(self.x0, "nonlocal.x0"))
        c = as_vector(self.coefficients, "nonlocal.coefficients")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "times", as_vector(self.times, "nonlocal.times", c.shape[0]))

    def coefficient_bound(self):
        return float(np.sum(np.abs(self.coefficients)))

    def admissible(self):
        return 0.0 < self.coefficient_bound() < 1.0

    def check_times(self, grid):
        for t in self.times:
            if not 0.0 < t < grid.horizon:
                raise ConfigError(f"anchor time {t} outside (0, T)", "nonlocal.times")
            grid.index_of(t)

    def evaluate(self, grid, x):
        idx = [grid.index_of(t) for t in self.times]
        return self.coefficients @ x[idx]

    def lipschitz(self, gamma, T):
        return self.coefficient_bound() * math.exp(gamma * T)

    def gamma_window(self, T):
        c = self.coefficient_bound()
        if not 0.0 < c < 1.0:
            return None
        return math.log(1.0 / c) / T


# ---------------------------------------------------------------------------
# problem instance


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Full nonlocal fractional differential QVI description."""

    q: float
    grid: TimeGrid
    dynamics: DynamicsSpec
    varmap: object
    constraints: object
    nonlocal_: object

    def __post_init__(self):
        q = float(self.q)
        if not 0.0 < q <= 1.0:
            raise ConfigError(f"order must lie in (0, 1], got {self.q}", "q")
        object.__setattr__(self, "q", q)
        if self.grid.node_count < 3:
            raise ConfigError("solver grids need at least three nodes", "nodes")
        n = self.dynamics.state_dim
        m = self.varmap.control_dim
        if self.varmap.state_dim != n:
            raise ConfigError(f"G state block must have {n} columns", "varmap.B")
        if self.constraints.dim != m:
            raise ConfigError(f"constraint dimension must equal {m}", "constraints")
        if self.dynamics.g.control_dim not in (None, m):
            raise ConfigError(f"g control block must have {m} columns", "dynamics.g")
        if self.nonlocal_.x0.shape[0] != n:
            raise ConfigError(f"x0 must have length {n}", "nonlocal.x0")
        if isinstance(self.nonlocal_, PointCombination):
            self.nonlocal_.check_times(self.grid)

    @property
    def n(self):
        return self.dynamics.state_dim

    @property
    def m(self):
        return self.varmap.control_dim

    @property
    def T(self):
        return self.grid.horizon

    def with_grid(self, node_count):
        return replace(self, grid=TimeGrid(self.grid.horizon, node_count))


# ---------------------------------------------------------------------------
# constants


def pqvi_uniqueness_lhs(l_G, eta_G, l_K):
    """Left side of the condition guaranteeing a unique PQVI solution.

    The condition holds when the value is below ``eta_G**2``.
    """
    return 2.0 * l_K**2 * (l_G * math.sqrt(l_G**2 + eta_G**2) + l_G**2 + eta_G**2)


def contraction_constant(l_G, eta_G, l_K):
    """``L`` governing Lipschitz dependence of the PQVI solution on the state."""
    return (
        2.0
        * l_K**2
        / eta_G**2
        * (l_G * math.sqrt(4.0 * l_G**2 + 2.0 * eta_G**2) + 2.0 * l_G**2 + eta_G**2)
    )


def kappa_constant(l_G, eta_G):
    r = math.sqrt(l_G**2 + 0.5 * eta_G**2)
    return 2.0 * l_G * (r + l_G) ** 2 / (eta_G**2 * r)


def sensitivity_bound(l_G, eta_G, l_K):
    """``sqrt(kappa / (1 - L))``; infinite when ``L >= 1``."""
    L = contraction_constant(l_G, eta_G, l_K)
    if L >= 1.0:
        return math.inf
    return math.sqrt(kappa_constant(l_G, eta_G) / (1.0 - L))


@dataclass(frozen=True)
class ConstantCertificate:
    """All constants feeding the existence and stability results.

    ``verdicts`` maps a check name to a boolean: ``H1``..``H5`` for the
    standing hypotheses, ``pqvi_unique`` for the single-instant uniqueness
    condition, ``pqvi_lipschitz`` for ``L < 1`` and ``picard_contraction``
    for ``lambda < 1``.
    """

    q: float
    T: float
    l_f: float
    l_g: float
    l_G: float
    eta_G: float
    l_K: float
    kl1_lhs: float
    L: float
    kappa: float
    sensitivity: float
    xi: float
    a: float
    b: float
    beta1: float
    beta2: float
    gamma: float = math.nan
    l_psi: float = math.nan
    lam: float = math.nan
    certified: bool = True
    verdicts: dict = field(default_factory=dict)

    @property
    def all_pass(self):
        return bool(self.verdicts) and all(self.verdicts.values())

    def as_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "verdicts"}
        out["verdicts"] = dict(self.verdicts)
        return out


def _base_constants(p):
    vm = p.varmap
    l_G, eta = float(vm.l_G), float(vm.eta_G)
    l_f, l_g = p.dynamics.l_f, p.dynamics.l_g
    l_K = p.constraints.l_K
    q, T = p.q, p.T
    if eta > 0 and l_G > 0:
        kl1 = pqvi_uniqueness_lhs(l_G, eta, l_K)
        L = contraction_constant(l_G, eta, l_K)
        kappa = kappa_constant(l_G, eta)
        beta1 = math.sqrt(l_G**2 + eta**2) / (l_G * eta)
        beta2 = math.sqrt(l_G**2 + 0.5 * eta**2) / (l_G * eta)
    else:
        kl1 = L = kappa = beta1 = beta2 = math.inf
    sens = math.sqrt(kappa / (1.0 - L)) if L < 1.0 else math.inf
    xi = l_g * (1.0 + sens) if math.isfinite(sens) else math.inf
    return dict(
        q=q,
        T=T,
        l_f=l_f,
        l_g=l_g,
        l_G=l_G,
        eta_G=eta,
        l_K=l_K,
        kl1_lhs=kl1,
        L=L,
        kappa=kappa,
        sensitivity=sens,
        xi=xi,
        a=T**q / gamma_fn(q + 1.0),
        b=(l_f + xi) / gamma_fn(q),
        beta1=beta1,
        beta2=beta2,
        certified=bool(getattr(vm, "certified", False)),
    )


def lambda_of_gamma(nonlocal_, T, q, growth, gamma):
    """Bielecki contraction bound ``l_psi(gamma) + growth / gamma**q``."""
    return nonlocal_.lipschitz(gamma, T) + growth / gamma**q


GAMMA_XTOL = 1e-6


def feasible_gamma(p, cert):
    """Bielecki exponent with the largest contraction margin ``1 - lambda``.

    The search runs over the admissible window of the nonlocal rule. For
    ``ZeroNonlocal`` the margin grows without bound, so the smallest
    ``gamma`` with ``lambda <= 1/2`` is returned instead.

    Raises
    ------
    CertificationError
        When no ``gamma`` in the window gives ``lambda < 1``; the attribute
        ``min_lambda`` carries the best value reached.
    """
    growth = cert.l_f + cert.xi
    nl, T, q = p.nonlocal_, p.T, p.q
    if not math.isfinite(growth):
        err = CertificationError("growth constant l_f + xi is infinite (L >= 1)")
        err.min_lambda = math.inf
        raise err
    window = nl.gamma_window(T)
    if isinstance(nl, ZeroNonlocal) or (window is None and nl.coefficient_bound() == 0.0):
        if growth == 0.0:
            return 1.0
        return (2.0 * growth) ** (1.0 / q)
    if window is None:
        err = CertificationError(
            f"nonlocal coefficient bound {nl.coefficient_bound()} leaves no admissible gamma"
        )
        err.min_lambda = math.inf
        raise err
    hi = window if isinstance(nl, MeanScaled) else window * (1.0 - 1e-9)
    lo = min(1e-9, hi * 1e-6)

    def lam(g):
        return lambda_of_gamma(nl, T, q, growth, g)

    res = minimize_scalar(lam, bounds=(lo, hi), method="bounded", options={"xatol": GAMMA_XTOL})
    best = float(res.x)
    for cand in (lo, hi):
        if lam(cand) < lam(best):
            best = cand
    if not lam(best) < 1.0:
        err = CertificationError(
            f"no gamma in (0, {hi:.6g}] gives lambda < 1; best lambda = {lam(best):.6g}"
        )
        err.min_lambda = lam(best)
        raise err
    return best


def _structural_verdicts(p, base, gamma):
    nl = p.nonlocal_
    cons = p.constraints
    diag_ok = not isinstance(cons, MovingBox) or not np.any(np.diag(cons.matrix))
    if isinstance(nl, ZeroNonlocal):
        h5 = True
    elif not nl.admissible():
        h5 = False
    else:
        g = gamma
        if not (g is not None and math.isfinite(g)):
            g = 0.5 * nl.gamma_window(p.T)
        h5 = 0.0 < nl.lipschitz(g, p.T) < 1.0
    eta, l_G = base["eta_G"], base["l_G"]
    return {
        "H1": bool(eta > 0 and l_G > 0),
        "H2": bool(diag_ok and math.isfinite(base["l_K"])),
        "H3": bool(math.isfinite(base["l_g"])),
        "H4": bool(math.isfinite(base["l_f"])),
        "H5": bool(h5),
        "pqvi_unique": bool(eta > 0 and base["kl1_lhs"] < eta**2),
        "pqvi_lipschitz": bool(base["L"] < 1.0),
    }


def derive_constants(p):
    """Compute the full :class:`ConstantCertificate` for ``p``.

    Raises
    ------
    CertificationError
        If the variational map is not strongly monotone (``eta_G <= 0``).
        A failing contraction or Bielecki condition is recorded in the
        verdicts instead.
    """
    base = _base_constants(p)
    if not base["eta_G"] > 0:
        raise CertificationError(
            f"variational map is not strongly monotone: eta_G = {base['eta_G']:.6g}"
        )
    cert = ConstantCertificate(**base)
    try:
        gamma = feasible_gamma(p, cert)
        lam = lambda_of_gamma(p.nonlocal_, p.T, p.q, cert.l_f + cert.xi, gamma)
    except CertificationError as exc:
        gamma, lam = math.nan, getattr(exc, "min_lambda", math.inf)
    verdicts = _structural_verdicts(p, base, gamma)
    verdicts["picard_contraction"] = bool(lam < 1.0)
    return replace(
        cert,
        gamma=gamma,
        l_psi=p.nonlocal_.lipschitz(gamma, p.T) if math.isfinite(gamma) else math.nan,
        lam=lam,
        verdicts=verdicts,
    )


# ---------------------------------------------------------------------------
# randomized audits


def _quotient_excess(fn, blocks, constant, rng, pairs, scale=10.0):
    """Max of ``|fn(a) - fn(b)| / sum_blocks |a_blk - b_blk| - constant``.

    The hypotheses bound differences by the sum of the per-argument
    distances, so the denominator splits the input into ``blocks``.
    """
    dim_in = sum(blocks)
    a = rng.uniform(-scale, scale, size=(pairs, dim_in))
    b = rng.uniform(-scale, scale, size=(pairs, dim_in))
    num = np.linalg.norm(fn(a) - fn(b), axis=1)
    edges = np.cumsum([0] + list(blocks))
    den = sum(np.linalg.norm((a - b)[:, lo:hi], axis=1) for lo, hi in zip(edges[:-1], edges[1:]))
    return float(np.max(num / den - constant))


def audit_lipschitz(p, *, pairs=1000, seed=0):
    """Largest amount by which sampled difference quotients exceed each
    certified constant. Nonpositive values mean the constant held."""
    from .qvi import project_constraint  # local import: qvi depends on this module

    rng = np.random.default_rng(seed)
    n, m = p.n, p.m
    dyn = p.dynamics
    out = {}
    out["f"] = _quotient_excess(lambda x: dyn.f(0.0, x), [n], dyn.l_f, rng, pairs)
    g_u = dyn.g.control_dim is not None

    def g_joint(z):
        x, u = z[:, :n], z[:, n:]
        return dyn.g(0.0, x, u if g_u else None)

    out["g"] = _quotient_excess(g_joint, [n, m], dyn.l_g, rng, pairs)

    def G_joint(z):
        return p.varmap(z[:, 0], z[:, 1 : 1 + n], z[:, 1 + n :])

    out["G"] = _quotient_excess(G_joint, [1, n, m], p.varmap.l_G, rng, pairs)
    cons = p.constraints
    w = rng.uniform(-10, 10, size=(pairs, m))
    u1 = rng.uniform(-10, 10, size=(pairs, m))
    u2 = rng.uniform(-10, 10, size=(pairs, m))
    num = np.linalg.norm(project_constraint(cons, u1, w) - project_constraint(cons, u2, w), axis=1)
    den = np.linalg.norm(u1 - u2, axis=1)
    out["K"] = float(np.max(num / den - cons.l_K))
    return out


AUDIT_MARGIN = 1e-8


def check_hypotheses(p, *, pairs=1000, seed=0):
    """Verdicts for the five standing hypotheses.

    Structural checks come from norms and eigenvalues of the affine data;
    each declared Lipschitz constant is double-checked on ``pairs`` random
    pairs. Failures are reported, never raised.
    """
    base = _base_constants(p)
    gamma = None
    if base["eta_G"] > 0:
        try:
            gamma = feasible_gamma(p, ConstantCertificate(**base))
        except CertificationError:
            gamma = None
    verdicts = _structural_verdicts(p, base, gamma)
    audit = audit_lipschitz(p, pairs=pairs, seed=seed)
    verdicts["H1"] &= audit["G"] <= AUDIT_MARGIN
    verdicts["H2"] &= audit["K"] <= AUDIT_MARGIN
    verdicts["H3"] &= audit["g"] <= AUDIT_MARGIN
    verdicts["H4"] &= audit["f"] <= AUDIT_MARGIN
    return {k: bool(verdicts[k]) for k in ("H1", "H2", "H3", "H4", "H5")}
