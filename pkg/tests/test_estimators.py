import numpy as np
import pytest
from sklearn.base import clone

from conftest import random_pqvi, scalar_problem
from nfdqvi.estimators import NFDQVISolver, PQVITransformer, as_problem
from nfdqvi.exceptions import ConfigError
from nfdqvi.qvi import solve_pqvi


def test_params_round_trip():
    est = NFDQVISolver(method="march", n_nodes=33)
    params = est.get_params()
    assert params["method"] == "march" and params["n_nodes"] == 33
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(scheme="rectangle")
    assert est.scheme == "rectangle"


def test_fit_predict_exponential():
    est = NFDQVISolver().fit(scalar_problem(1.0, 257))
    assert est.n_features_out_ == 1
    s = np.array([0.0, 0.33, 1.0])
    np.testing.assert_allclose(est.predict(s)[:, 0], np.exp(-s), atol=1e-5)
    assert est.predict_control(s).shape == (3, 1)
    with pytest.raises(ConfigError):
        est.predict([1.5])


def test_fit_on_application_spec(maop_spec):
    est = NFDQVISolver(n_nodes=65).fit(maop_spec)
    assert est.problem_.grid.node_count == 65
    assert est.certificate_.all_pass
    assert est.trajectory_.x.shape == (65, 3)


def test_as_problem_rejects_unknown():
    with pytest.raises(ConfigError):
        as_problem("not a problem")


def test_transformer_matches_solver(rng):
    vm, cons, _ = random_pqvi(rng, 2)
    tr = PQVITransformer(varmap=vm, constraints=cons, s=0.2)
    X = rng.uniform(-1, 1, (6, 2))
    U = tr.fit_transform(X)
    assert tr.n_features_in_ == 2
    for x, u in zip(X, U):
        np.testing.assert_allclose(u, solve_pqvi(vm, cons, 0.2, x).solution, atol=1e-12)
    with pytest.raises(ConfigError):
        tr.transform(np.ones((2, 3)))


def test_transformer_needs_problem_data():
    with pytest.raises(ConfigError):
        PQVITransformer().fit(np.zeros((1, 1)))
