"""scikit-learn style wrappers.

:class:`NFDQVISolver` fits a problem (instance or application spec) and
predicts the state at arbitrary times by interpolation.
:class:`PQVITransformer` maps batches of states to PQVI controls at a fixed
instant.
"""

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .apps import MaopSpec, PcpSpec, maop_to_nfdqvi, pcp_to_nfdqvi
from .exceptions import ConfigError
from .problem import ProblemInstance, derive_constants
from .qvi import default_step, solve_pqvi_batch
from .solver import SolverConfig, solve

__all__ = ["NFDQVISolver", "PQVITransformer", "as_problem"]


def as_problem(obj, n_nodes=None):
    """Turn a problem instance or application spec into a problem instance."""
    if isinstance(obj, (MaopSpec, PcpSpec)):
        if n_nodes is not None:
            obj = dataclasses.replace(obj, nodes=n_nodes)
        return maop_to_nfdqvi(obj) if isinstance(obj, MaopSpec) else pcp_to_nfdqvi(obj)
    if isinstance(obj, ProblemInstance):
        return obj if n_nodes is None else obj.with_grid(n_nodes)
    raise ConfigError(f"cannot build a problem from {type(obj).__name__}", "X")


class NFDQVISolver(BaseEstimator):
    """Trajectory solver with the estimator interface.

    Parameters
    ----------
    method : {"picard", "march"}
    n_nodes : int or None
        Override the grid size of the fitted problem.
    scheme : {"trapezoid", "rectangle"}
    picard_tol, qvi_tol : float
    allow_uncertified : bool

    Attributes
    ----------
    problem_ : ProblemInstance
    certificate_ : ConstantCertificate
    trajectory_ : Trajectory
    n_features_out_ : int
        State dimension.
    """

    def __init__(self, method="picard", n_nodes=None, scheme="trapezoid", picard_tol=1e-12,
                 qvi_tol=1e-10, allow_uncertified=False):
        self.method = method
        self.n_nodes = n_nodes
        self.scheme = scheme
        self.picard_tol = picard_tol
        self.qvi_tol = qvi_tol
        self.allow_uncertified = allow_uncertified

    def _config(self):
        return SolverConfig(
            method=self.method,
            scheme=self.scheme,
            picard_tol=self.picard_tol,
            qvi_tol=self.qvi_tol,
            allow_uncertified=self.allow_uncertified,
        )

    def fit(self, X, y=None):
        """Solve the problem ``X``; ``y`` is ignored."""
        cfg = self._config()
        p = as_problem(X, self.n_nodes)
        cert = derive_constants(p)
        self.problem_ = p
        self.certificate_ = cert
        self.trajectory_ = solve(p, cfg, cert=cert)
        self.n_features_out_ = p.n
        return self

    def predict(self, s):
        """Piecewise-linear state at times ``s``, shape ``(len(s), n)``."""
        check_is_fitted(self, "trajectory_")
        s = np.asarray(s, dtype=float).ravel()
        T = self.problem_.T
        if np.any(s < 0) or np.any(s > T):
            raise ConfigError(f"times must lie in [0, {T}]", "s")
        traj = self.trajectory_
        return np.column_stack([np.interp(s, traj.s, traj.x[:, i]) for i in range(traj.x.shape[1])])

    def predict_control(self, s):
        """Piecewise-linear control at times ``s``, shape ``(len(s), m)``."""
        check_is_fitted(self, "trajectory_")
        s = np.asarray(s, dtype=float).ravel()
        traj = self.trajectory_
        return np.column_stack([np.interp(s, traj.s, traj.u[:, j]) for j in range(traj.u.shape[1])])


class PQVITransformer(TransformerMixin, BaseEstimator):
    """Map states ``x`` (rows of ``X``) to PQVI solutions ``u`` at time ``s``.

    Parameters
    ----------
    varmap, constraints :
        The variational map and constraint set of the PQVI.
    s : float
        Frozen time.
    rho : float or None
        Step size; defaults to ``eta_G / l_G**2``.
    tol : float
    max_iter : int
    """

    def __init__(self, varmap=None, constraints=None, s=0.0, rho=None, tol=1e-10, max_iter=100_000):
        self.varmap = varmap
        self.constraints = constraints
        self.s = s
        self.rho = rho
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X=None, y=None):
        if self.varmap is None or self.constraints is None:
            raise ConfigError("varmap and constraints are required", "PQVITransformer")
        if self.varmap.control_dim != self.constraints.dim:
            raise ConfigError("varmap and constraints disagree on the control size", "constraints")
        self.rho_ = default_step(self.varmap) if self.rho is None else float(self.rho)
        self.n_features_in_ = self.varmap.state_dim
        if X is not None:
            check_array(X, ensure_min_features=self.n_features_in_)
        return self

    def transform(self, X):
        check_is_fitted(self, "rho_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(f"expected {self.n_features_in_} state columns, got {X.shape[1]}", "X")
        s = np.full(X.shape[0], float(self.s))
        U, _ = solve_pqvi_batch(self.varmap, self.constraints, s, X, None, self.rho_, self.tol,
                                self.max_iter)
        return U
