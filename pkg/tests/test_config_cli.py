import csv
import json
import subprocess
import sys
from importlib import resources

import numpy as np
import pytest

from nfdqvi.apps import MaopSpec, PcpSpec, verify_A1_A4
from nfdqvi.cli import main
from nfdqvi.config import load_config, load_document, parse_document
from nfdqvi.exceptions import ConfigError
from nfdqvi.problem import MovingBox, PointCombination, ProblemInstance

MINIMAL = {
    "kind": "problem", "q": 1.0, "horizon": 1.0, "nodes": 65,
    "dynamics": {"f": {"offset": [0], "state": [[-1]]},
                 "g": {"offset": [0], "state": [[0]], "control": [[0]]}},
    "varmap": {"A": [[1]], "B": [[0]]},
    "constraints": {"type": "fixed_box", "lo": [-1], "hi": [1]},
    "nonlocal": {"type": "zero", "x0": [1]},
}


def doc_with(**changes):
    doc = json.loads(json.dumps(MINIMAL))
    if "nonlocal_" in changes:
        changes["nonlocal"] = changes.pop("nonlocal_")
    doc.update(changes)
    return doc


def write(tmp_path, doc, name="problem.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0], lines[1].split(","), np.loadtxt(lines[2:], delimiter=",", ndmin=2)


# config ----------------------------------------------------------------------


def test_minimal_problem_file(tmp_path):
    p = load_config(write(tmp_path, MINIMAL))
    assert isinstance(p, ProblemInstance)
    assert p.q == 1.0 and p.grid.node_count == 65


def test_moving_box_and_point_combination(tmp_path):
    doc = doc_with(
        varmap={"A": [[2, 0], [0, 2]], "B": [[1], [0]]},
        dynamics={"f": {"offset": [0], "state": [[-1]]},
                  "g": {"offset": [0], "state": [[0]], "control": [[0.1, 0]]}},
        constraints={"type": "moving_box", "lo": ["-inf", 0], "hi": [1, None],
                     "phi": {"matrix": [[0, 0.1], [0.1, 0]]}},
        nonlocal_={"type": "point_combination", "coefficients": [0.3], "times": [0.5], "x0": [1]},
    )
    p = load_config(write(tmp_path, doc))
    assert isinstance(p.constraints, MovingBox)
    assert p.constraints.lo[0] == -np.inf and p.constraints.hi[1] == np.inf
    assert isinstance(p.nonlocal_, PointCombination)


def test_large_mean_coefficient_names_h5(tmp_path):
    doc = doc_with(nonlocal_={"type": "mean_scaled", "coefficients": [1.2], "x0": [1]})
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, doc))
    assert "H5" in str(info.value) and "nonlocal.coefficients" in str(info.value)


def test_maop_file_with_large_a_names_h5():
    doc = {"kind": "maop", "alpha": [1.0], "beta": [0.0], "coupling": [[0.0]],
           "phi_matrix": [[0.0]], "lower": [0], "upper": [1], "a": [1.2], "x0": [0.0]}
    with pytest.raises(ConfigError) as info:
        parse_document(doc)
    assert "H5" in str(info.value)


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.pop("varmap"), "varmap"),
    (lambda d: d.update(kind="market"), "kind"),
    (lambda d: d["constraints"].update(type="ball"), "constraints.type"),
    (lambda d: d["dynamics"]["f"].update(state=[[1, 2]]), "dynamics.f"),
    (lambda d: d.update(solver={"picard_tol": -1}), "solver"),
    (lambda d: d.update(seed=-3), "seed"),
])
def test_invalid_files_name_the_field(tmp_path, mutate, field):
    doc = json.loads(json.dumps(MINIMAL))
    mutate(doc)
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, doc))
    assert field in str(info.value)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError) as info:
        load_config(str(bad))
    assert "line 1" in str(info.value)


def test_unknown_spec_entry_rejected():
    with pytest.raises(ConfigError) as info:
        parse_document({"kind": "pcp", "bogus": 1})
    assert "bogus" in str(info.value)


def test_shipped_demos_load(maop_spec, pcp_spec):
    assert isinstance(maop_spec, MaopSpec)
    assert isinstance(pcp_spec, PcpSpec)
    assert verify_A1_A4(pcp_spec)["all_pass"]


def test_solver_and_seed_sections(tmp_path):
    doc = doc_with(solver={"method": "march", "picard_tol": 1e-11}, seed=9)
    loaded = load_document(write(tmp_path, doc))
    assert loaded.solver == {"method": "march", "picard_tol": 1e-11}
    assert loaded.seed == 9


# CLI -------------------------------------------------------------------------


def test_check_exit_codes(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert main(["check", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    payload = json.loads((tmp_path / "a" / "certificate.json").read_text())
    assert all(payload["hypotheses"].values())
    bad = doc_with(
        nonlocal_={"type": "mean_scaled", "coefficients": [0.99], "x0": [1]},
        dynamics={"f": {"offset": [0], "state": [[-3]]},
                  "g": {"offset": [0], "state": [[0]], "control": [[0]]}},
    )
    assert main(["check", "--config", write(tmp_path, bad, "bad.json"),
                 "--out", str(tmp_path / "b")]) == 1


def test_degenerate_grid_is_config_error(tmp_path, capsys):
    assert main(["solve", "--config", write(tmp_path, MINIMAL), "--nodes", "2",
                 "--out", str(tmp_path)]) == 3
    assert "nodes" in capsys.readouterr().err


def test_usage_errors_exit_3(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["solve", "--scheme", "simpson"])
    assert info.value.code == 3
    assert main(["solve", "--out", str(tmp_path)]) == 3
    assert main(["solve", "--config", write(tmp_path, MINIMAL), "--epsilon", "0"]) == 3


def test_nonconvergence_exit_2(tmp_path):
    doc = doc_with(solver={"picard_max_sweeps": 1})
    assert main(["solve", "--config", write(tmp_path, doc), "--out", str(tmp_path)]) == 2


def test_solve_writes_trajectory(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--config", write(tmp_path, MINIMAL), "--out", str(out)]) == 0
    comment, header, data = read_csv(out / "trajectory.csv")
    assert comment.startswith("# ")
    for key in ("q=", "T=", "N=", "gamma=", "rho=", "seed=", "verdicts="):
        assert key in comment
    assert header == ["s", "x_1", "u_1", "qvi_residual"]
    assert data.shape == (65, 4)
    np.testing.assert_allclose(data[:, 1], np.exp(-data[:, 0]), atol=1e-3)
    report = json.loads((out / "report.json").read_text())
    assert report["solve"]["residuals"]["qvi"] <= 1e-10


def test_demo_maop_outputs(tmp_path):
    out = tmp_path / "maop"
    assert main(["demo-maop", "--out", str(out), "--nodes", "65"]) == 0
    _, header, data = read_csv(out / "trajectory.csv")
    assert header == ["s", "x_1", "x_2", "x_3", "u_1", "u_2", "u_3", "qvi_residual"]
    _, header, _ = read_csv(out / "stability.csv")
    assert header == ["s", "deviation", "bound", "ratio"]
    report = json.loads((out / "report.json").read_text())
    assert report["equilibrium"]["nash"] is True
    assert report["gamma_feasibility"]["rho_at_gamma_star"] < 0


def test_stability_on_demo_pcp(tmp_path):
    out = tmp_path / "pcp"
    demo = resources.files("nfdqvi.data").joinpath("demo_pcp.json")
    with resources.as_file(demo) as path:
        code = main(["stability", "--config", str(path), "--epsilon", "1e-2", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["stability"]["max_ratio"] < 1.0


def test_outputs_are_byte_identical(tmp_path):
    args = ["demo-pcp", "--nodes", "65", "--seed", "4", "--mode", "weighted"]
    assert main(args + ["--out", str(tmp_path / "one")]) == 0
    assert main(args + ["--out", str(tmp_path / "two")]) == 0
    for name in ("trajectory.csv", "stability.csv", "report.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_seventeen_digit_numbers(tmp_path):
    out = tmp_path / "digits"
    main(["solve", "--config", write(tmp_path, MINIMAL), "--out", str(out)])
    with open(out / "trajectory.csv") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    value = rows[5][1]
    assert float(value) == float(f"{float(value):.17g}")
    assert len(value.replace(".", "").replace("-", "").split("e")[0].lstrip("0")) >= 15


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "nfdqvi", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "demo-maop" in res.stdout
