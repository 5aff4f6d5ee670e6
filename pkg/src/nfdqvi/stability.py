"""Hyers-Ulam stability experiments with Mittag-Leffler envelopes.

A perturbed system ``D^q z = f(s, z) + g(s, z, v) + h(s)`` is solved with
``v`` the PQVI solution at ``(s, z(s))`` and the initial value pinned to the
nominal ``x(0)``. Its distance to the nominal trajectory is compared with

* ``a * eps * E_q(b Gamma(q) s^q)`` for perturbations bounded by ``eps``;
* ``a * phi(s) * E_q(b Gamma(q) s^q)`` for perturbations bounded by a
  nondecreasing weight ``phi``,

where ``a = T^q / Gamma(q+1)`` and ``b = (l_f + xi) / Gamma(q)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DomainError, NonConvergenceError
from .fraccalc import build_weights, gamma_fn, mittag_leffler
from .problem import derive_constants
from .solver import SolverConfig, march_solve, picard_solve

__all__ = [
    "PerturbationSpec",
    "StabilityReport",
    "GronwallResult",
    "make_perturbation",
    "solve_perturbed",
    "mlhu_bound",
    "mlhur_bound",
    "run_stability_experiment",
    "gronwall_check",
]

VERDICT_RTOL = 1e-6
SHAPES = ("constant", "sinusoid", "random")


@dataclass(frozen=True, eq=False)
class PerturbationSpec:
    """A realised forcing ``h`` on the grid and the bound it respects.

    ``weight`` is ``None`` for a uniform bound ``||h|| <= epsilon``; otherwise
    it holds nondecreasing samples ``phi(s_k)`` and the bound is
    ``epsilon * phi(s_k)``.
    """

    epsilon: float
    h: np.ndarray
    weight: np.ndarray = None
    shape: str = "constant"
    seed: int = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive", "epsilon")
        h = np.asarray(self.h, dtype=float)
        if h.ndim == 1:
            h = h[:, None]
        object.__setattr__(self, "h", h)
        if self.weight is not None:
            w = np.asarray(self.weight, dtype=float)
            if w.shape != (h.shape[0],):
                raise ConfigError("weight needs one sample per node", "weight")
            if np.any(w < 0) or np.any(np.diff(w) < 0):
                raise DomainError("weight samples must be nonnegative and nondecreasing")
            object.__setattr__(self, "weight", w)
        bound = self.bound()
        norms = np.linalg.norm(h, axis=1)
        if np.any(norms > bound * (1 + 1e-12) + 1e-300):
            raise ConfigError("perturbation exceeds its declared bound", "h")

    @property
    def mode(self):
        return "uniform" if self.weight is None else "weighted"

    def bound(self):
        if self.weight is None:
            return np.full(self.h.shape[0], self.epsilon)
        return self.epsilon * self.weight


def make_perturbation(grid, dim, epsilon, shape="constant", *, weight=None, seed=None):
    """Build an admissible perturbation of the given ``shape``.

    ``constant`` points in a fixed unit direction at full size;
    ``sinusoid`` is a sine of random frequency and phase, amplified by 1.5
    and clipped back to the bound; ``random`` draws a direction per node and
    rescales it onto the bound. Directions come from ``seed``.
    """
    if shape not in SHAPES:
        raise ConfigError(f"unknown perturbation shape {shape!r}", "shape")
    rng = np.random.default_rng(seed)
    N = grid.node_count
    s = grid.nodes
    scale = np.full(N, float(epsilon)) if weight is None else epsilon * np.asarray(weight, float)
    if shape == "constant":
        d = rng.standard_normal(dim)
        h = np.outer(scale, d / np.linalg.norm(d))
    elif shape == "sinusoid":
        d = rng.standard_normal(dim)
        freq = rng.uniform(0.5, 6.0) * np.pi / grid.horizon
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.clip(1.5 * np.sin(freq * s + phase), -1.0, 1.0)
        h = np.outer(scale * wave, d / np.linalg.norm(d))
    else:
        d = rng.standard_normal((N, dim))
        h = scale[:, None] * d / np.linalg.norm(d, axis=1, keepdims=True)
    # guard against rounding pushing a node a hair over its bound
    norms = np.linalg.norm(h, axis=1)
    over = norms > scale
    h[over] *= (scale[over] / norms[over])[:, None]
    return PerturbationSpec(float(epsilon), h, weight, shape, seed)


def solve_perturbed(p, nominal, pert, cfg=None, *, cert=None):
    """Trajectory of the perturbed system with ``z(0)`` pinned to ``x(0)``.

    The nonlocal rule is switched off for ``z``. Iteration starts from the
    nominal pair; a zero forcing returns the nominal trajectory itself
    (same system, same initial value, unique solution).
    """
    cfg = cfg or SolverConfig()
    if pert.h.shape != nominal.x.shape:
        raise ConfigError(
            f"perturbation shape {pert.h.shape} does not match state samples {nominal.x.shape}", "h"
        )
    if not np.any(pert.h):
        return nominal
    x0 = nominal.x[0]
    if cfg.method == "march":
        return march_solve(p, cfg, cert=cert, initial_value=x0, forcing=pert.h)
    return picard_solve(
        p, cfg, cert=cert, initial_value=x0, forcing=pert.h, warm_start=(nominal.x, nominal.u)
    )


def _envelope(cert, grid):
    q = cert.q
    arg = cert.b * gamma_fn(q) * grid.nodes**q
    return np.array([mittag_leffler(q, z) for z in arg])


def mlhu_bound(cert, epsilon, grid):
    """``a * eps * E_q(b Gamma(q) s_k^q)`` at every node."""
    return cert.a * float(epsilon) * _envelope(cert, grid)


def mlhur_bound(cert, weight, grid):
    """``a * phi(s_k) * E_q(b Gamma(q) s_k^q)``; ``phi`` must be nondecreasing."""
    w = np.asarray(weight, dtype=float)
    if w.shape != (grid.node_count,):
        raise ConfigError("weight needs one sample per node", "weight")
    if np.any(w < 0) or np.any(np.diff(w) < 0):
        raise DomainError("weight samples must be nonnegative and nondecreasing")
    return cert.a * w * _envelope(cert, grid)


@dataclass(frozen=True, eq=False)
class StabilityReport:
    deviation: np.ndarray
    bound: np.ndarray
    ratio: np.ndarray
    max_ratio: float
    verdict: bool
    a: float
    b: float
    epsilon: float
    mode: str
    shape: str
    seed: int = None
    perturbed: object = field(default=None, repr=False)

    def as_dict(self):
        return {
            "max_ratio": self.max_ratio,
            "verdict": self.verdict,
            "a": self.a,
            "b": self.b,
            "epsilon": self.epsilon,
            "mode": self.mode,
            "shape": self.shape,
            "seed": self.seed,
            "max_deviation": float(np.max(self.deviation)),
        }


def _ratios(deviation, bound):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, deviation / np.where(bound > 0, bound, 1.0), 0.0)
    ratio[(bound <= 0) & (deviation > 1e-14)] = np.inf
    return ratio


def run_stability_experiment(p, cfg=None, pert=None, *, nominal=None, cert=None, allowance=0.0):
    """Solve nominal and perturbed systems and compare with the envelope.

    The verdict is ``max(deviation / bound) <= 1 + 1e-6 + allowance``.
    """
    cfg = cfg or SolverConfig()
    cert = cert or derive_constants(p)
    if nominal is None:
        nominal = (march_solve if cfg.method == "march" else picard_solve)(p, cfg, cert=cert)
    if pert is None:
        pert = PerturbationSpec(1.0, np.zeros_like(nominal.x))
    z = solve_perturbed(p, nominal, pert, cfg, cert=cert)
    deviation = np.linalg.norm(z.x - nominal.x, axis=1)
    if pert.weight is None:
        bound = mlhu_bound(cert, pert.epsilon, p.grid)
    else:
        bound = mlhur_bound(cert, pert.epsilon * pert.weight, p.grid)
    ratio = _ratios(deviation, bound)
    max_ratio = float(np.max(ratio))
    return StabilityReport(
        deviation=deviation,
        bound=bound,
        ratio=ratio,
        max_ratio=max_ratio,
        verdict=bool(max_ratio <= 1.0 + VERDICT_RTOL + allowance),
        a=cert.a,
        b=cert.b,
        epsilon=pert.epsilon,
        mode=pert.mode,
        shape=pert.shape,
        seed=pert.seed,
        perturbed=z,
    )


@dataclass(frozen=True, eq=False)
class GronwallResult:
    z: np.ndarray
    bound: np.ndarray
    ratio: np.ndarray
    max_ratio: float
    verdict: bool


def gronwall_check(q, k, w, grid, *, scheme="rectangle", allowance=0.0):
    """Check the fractional Gronwall bound on its equality case.

    Solves ``z = w + k Gamma(q) I^q[z]`` on the grid (the integral
    inequality with equality) by forward substitution and verifies
    ``z(s_j) <= w(s_j) E_q(k Gamma(q) s_j^q) (1 + 1e-6 + allowance)`` at
    every node.

    With the default rectangle rule the left-point step function built
    from ``z`` satisfies the integral relation exactly at the nodes and,
    being nondecreasing, satisfies the inequality everywhere in between,
    so the check carries no quadrature error. The trapezoid rule solves a
    second-order approximation instead and may overshoot the bound by its
    discretisation error when ``z`` grows quickly.

    Raises
    ------
    NonConvergenceError
        When the implicit diagonal term makes the discrete equation
        unsolvable (``k Gamma(q) w_jj >= 1``).
    """
    if k < 0 or not q > 0:
        raise DomainError("need k >= 0 and q > 0")
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.node_count,):
        raise ConfigError("w needs one sample per node", "w")
    if np.any(w < 0) or np.any(np.diff(w) < 0):
        raise DomainError("w must be nonnegative and nondecreasing")
    c = k * gamma_fn(q)
    W = build_weights(grid, q, scheme).matrix
    N = grid.node_count
    z = np.zeros(N)
    for j in range(N):
        denom = 1.0 - c * W[j, j]
        if denom <= 0:
            raise NonConvergenceError(
                f"discrete Gronwall equation singular at node {j} (k Gamma(q) T^q too large)",
                node=j,
            )
        z[j] = (w[j] + c * (W[j, :j] @ z[:j])) / denom
        if not np.isfinite(z[j]):
            raise NonConvergenceError("discrete Gronwall solution blew up", node=j)
    env = np.array([mittag_leffler(q, c * t**q) for t in grid.nodes])
    bound = w * env
    ratio = _ratios(z, bound)
    max_ratio = float(np.max(ratio))
    verdict = bool(max_ratio <= 1.0 + VERDICT_RTOL + allowance)
    return GronwallResult(z, bound, ratio, max_ratio, verdict)
