"""Nonlocal fractional differential quasi-variational inequalities.

Fractional calculus primitives, problem descriptions with derived
certificates, a PQVI solver, trajectory solvers, Hyers-Ulam stability
experiments and two applications (multi-agent Nash equilibria and price
control). The scikit-learn style wrappers live in :mod:`nfdqvi.estimators`.
"""

from .apps import (
    MaopSpec,
    PcpSpec,
    check_market_equilibrium,
    check_nash,
    maop_to_nfdqvi,
    pcp_to_nfdqvi,
    verify_A1_A4,
)
from .config import load_config
from .exceptions import (
    CertificationError,
    ConfigError,
    DomainError,
    NFDQVIError,
    NonConvergenceError,
    ShapeError,
)
from .fraccalc import TimeGrid, build_weights, caputo_residual, gamma_fn, mittag_leffler
from .problem import (
    AffineMap,
    DynamicsSpec,
    FixedBox,
    MeanScaled,
    MovingBox,
    PointCombination,
    ProblemInstance,
    VariationalMapSpec,
    ZeroNonlocal,
    check_hypotheses,
    derive_constants,
)
from .qvi import solve_pqvi
from .solver import SolverConfig, march_solve, picard_solve, solve
from .stability import make_perturbation, run_stability_experiment

__version__ = "0.1.0"
