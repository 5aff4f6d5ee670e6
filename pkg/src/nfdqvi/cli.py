"""Command-line front end.

Exit codes: 0 success, 1 a certificate or stability condition failed,
2 an iteration did not converge, 3 invalid configuration.
"""

import argparse
import dataclasses
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .apps import (
    MaopSpec,
    PcpSpec,
    check_market_equilibrium,
    check_nash,
    gamma_star,
    maop_to_nfdqvi,
    pcp_to_nfdqvi,
    rho_feasibility,
    verify_A1_A4,
)
from .config import load_document, parse_document
from .exceptions import CertificationError, ConfigError, DomainError, NonConvergenceError, ShapeError
from .problem import check_hypotheses, derive_constants
from .solver import SolverConfig, residual_check, solve
from .stability import make_perturbation, run_stability_experiment

EXIT_OK, EXIT_CONDITION, EXIT_NONCONVERGENCE, EXIT_CONFIG = 0, 1, 2, 3
SCHEMES = {"rect": "rectangle", "trap": "trapezoid"}
DEMOS = {"demo-maop": "demo_maop.json", "demo-pcp": "demo_pcp.json"}


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v):
    return "%.17g" % v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return repr(obj)


def _verdict_text(verdicts):
    return ",".join(f"{k}={'pass' if v else 'fail'}" for k, v in verdicts.items())


def _comment(p, gamma, rho, seed, verdicts):
    return (
        f"# q={_fmt(p.q)} T={_fmt(p.T)} N={p.grid.node_count} gamma={_fmt(gamma)} "
        f"rho={_fmt(rho)} seed={seed} verdicts={_verdict_text(verdicts)}"
    )


def write_csv(path, comment, columns, rows):
    """Write ``rows`` with a comment line and header; 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(comment + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def trajectory_table(traj):
    n, m = traj.x.shape[1], traj.u.shape[1]
    cols = ["s"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{j + 1}" for j in range(m)]
    cols.append("qvi_residual")
    rows = np.column_stack([traj.s, traj.x, traj.u, traj.qvi_residuals])
    return cols, rows


def stability_table(grid, report):
    cols = ["s", "deviation", "bound", "ratio"]
    return cols, np.column_stack([grid.nodes, report.deviation, report.bound, report.ratio])


# ---------------------------------------------------------------------------
# workflow


@dataclasses.dataclass
class RunConfig:
    """Parsed command line."""

    command: str
    config: str = None
    out: str = "."
    nodes: int = None
    seed: int = None
    epsilon: float = 1e-2
    gamma: float = None
    rho: float = None
    step_policy: str = "contraction"
    scheme: str = "trap"
    solver: str = "picard"
    mode: str = "uniform"
    shape: str = "random"
    tol: float = None
    allow_uncertified: bool = False


def _load(rc):
    if rc.config is not None:
        loaded = load_document(rc.config)
    elif rc.command in DEMOS:
        text = resources.files("nfdqvi.data").joinpath(DEMOS[rc.command]).read_text("utf-8")
        loaded = parse_document(json.loads(text))
    else:
        raise ConfigError("a problem file is required for this command", "--config")
    obj = loaded.obj
    if rc.command == "demo-maop" and not isinstance(obj, MaopSpec):
        raise ConfigError("demo-maop needs a maop file", "kind")
    if rc.command == "demo-pcp" and not isinstance(obj, PcpSpec):
        raise ConfigError("demo-pcp needs a pcp file", "kind")
    if rc.nodes is not None:
        if isinstance(obj, (MaopSpec, PcpSpec)):
            obj = dataclasses.replace(obj, nodes=rc.nodes)
        else:
            obj = obj.with_grid(rc.nodes)
    if isinstance(obj, MaopSpec):
        problem = maop_to_nfdqvi(obj)
    elif isinstance(obj, PcpSpec):
        problem = pcp_to_nfdqvi(obj)
    else:
        problem = obj
    solver = dict(loaded.solver)
    overrides = {
        "method": rc.solver,
        "scheme": SCHEMES[rc.scheme],
        "gamma": rc.gamma,
        "rho": rc.rho,
        "step_policy": rc.step_policy,
        "picard_tol": rc.tol,
        "allow_uncertified": rc.allow_uncertified or None,
    }
    solver.update({k: v for k, v in overrides.items() if v is not None})
    cfg = SolverConfig(**solver)
    seed = loaded.seed if rc.seed is None else rc.seed
    return obj, problem, cfg, seed


def _check_payload(spec, problem, cert):
    payload = {"certificate": cert.as_dict(), "hypotheses": check_hypotheses(problem)}
    if isinstance(spec, PcpSpec):
        a14 = verify_A1_A4(spec)
        a14.pop("certificate")
        payload["A1_A4"] = a14
    if isinstance(spec, MaopSpec):
        amax = float(np.max(np.abs(spec.a)))
        g = gamma_star(problem.T, amax)
        payload["gamma_feasibility"] = {
            "a_max": amax, "gamma_star": g, "rho_at_gamma_star": rho_feasibility(g, problem.T, amax)
        }
    return payload


def _check_ok(payload):
    ok = all(payload["certificate"]["verdicts"].values()) and all(payload["hypotheses"].values())
    if "A1_A4" in payload:
        ok = ok and payload["A1_A4"]["all_pass"]
    return ok


def _equilibrium(spec, traj):
    if isinstance(spec, MaopSpec):
        return {"nash": check_nash(spec, traj)}
    if isinstance(spec, PcpSpec):
        return {"market_equilibrium": check_market_equilibrium(spec, traj)}
    return {}


def _solve_and_emit(problem, cfg, cert, seed, out):
    traj = solve(problem, cfg, cert=cert)
    res = residual_check(problem, traj, scheme=cfg.scheme)
    cols, rows = trajectory_table(traj)
    write_csv(out / "trajectory.csv", _comment(problem, traj.gamma, traj.rho, seed, cert.verdicts),
              cols, rows)
    return traj, res


def _stability_and_emit(rc, problem, cfg, cert, nominal, seed, out):
    weight = problem.grid.nodes ** problem.q if rc.mode == "weighted" else None
    pert = make_perturbation(problem.grid, problem.n, rc.epsilon, rc.shape, weight=weight, seed=seed)
    report = run_stability_experiment(problem, cfg, pert, nominal=nominal, cert=cert)
    cols, rows = stability_table(problem.grid, report)
    write_csv(out / "stability.csv",
              _comment(problem, nominal.gamma, nominal.rho, seed, cert.verdicts), cols, rows)
    return report


def run(rc):
    """Execute one command and return its exit code."""
    try:
        spec, problem, cfg, seed = _load(rc)
        out = Path(rc.out)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, DomainError, ShapeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: cannot use output directory ({exc})", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cert = derive_constants(problem)
        if rc.command == "check":
            payload = _check_payload(spec, problem, cert)
            payload["seed"] = seed
            write_json(out / "certificate.json", payload)
            ok = _check_ok(payload)
            for k, v in {**payload["certificate"]["verdicts"], **payload["hypotheses"]}.items():
                print(f"{k}: {'pass' if v else 'fail'}")
            print(f"lambda = {_fmt(cert.lam)} at gamma = {_fmt(cert.gamma)}")
            return EXIT_OK if ok else EXIT_CONDITION

        report = {"seed": seed, "certificate": cert.as_dict()}
        if rc.command in DEMOS:
            report.update(_check_payload(spec, problem, cert))
        traj, res = _solve_and_emit(problem, cfg, cert, seed, out)
        report["solve"] = {
            "method": traj.method,
            "iterations": traj.iterations,
            "gamma": traj.gamma,
            "rho": traj.rho,
            "residuals": res._asdict(),
        }
        ok = True
        if rc.command in DEMOS:
            eq = _equilibrium(spec, traj)
            report["equilibrium"] = eq
            ok = _check_ok(report) and all(eq.values())
        if rc.command in ("stability",) + tuple(DEMOS):
            stab = _stability_and_emit(rc, problem, cfg, cert, traj, seed, out)
            report["stability"] = stab.as_dict()
            ok = ok and stab.verdict
            print(f"stability max ratio = {_fmt(stab.max_ratio)} ({'pass' if stab.verdict else 'fail'})")
        write_json(out / "report.json", report)
        print(f"solved with {traj.method} in {traj.iterations} iterations; "
              f"integral residual {_fmt(res.integral)}, qvi residual {_fmt(res.qvi)}")
        return EXIT_OK if ok else EXIT_CONDITION
    except CertificationError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except NonConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigError, DomainError, ShapeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 3), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON problem file")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--nodes", metavar="N", type=int, help="override the grid node count")
    common.add_argument("--seed", metavar="S", type=int, help="perturbation seed (default: from file, else 0)")
    common.add_argument("--epsilon", metavar="E", type=float, default=1e-2,
                        help="perturbation size (default: 1e-2)")
    common.add_argument("--gamma", metavar="G", type=float, help="override the Bielecki exponent")
    common.add_argument("--rho", metavar="R", type=float, help="override the PQVI step size")
    common.add_argument("--step-policy", choices=("contraction", "uniqueness", "sensitivity"),
                        default="contraction")
    common.add_argument("--scheme", choices=tuple(SCHEMES), default="trap")
    common.add_argument("--solver", choices=("picard", "march"), default="picard")
    common.add_argument("--mode", choices=("uniform", "weighted"), default="uniform",
                        help="perturbation bound: eps, or eps * s^q")
    common.add_argument("--shape", choices=("constant", "sinusoid", "random"), default="random")
    common.add_argument("--tol", type=float, help="Picard / corrector tolerance")
    common.add_argument("--allow-uncertified", action="store_true",
                        help="solve even when certificate checks fail")
    parser = _Parser(
        prog="nfdqvi", description="Nonlocal fractional differential quasi-variational inequalities."
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "check": "derive constants and hypothesis verdicts",
        "solve": "solve and write trajectory.csv",
        "stability": "solve, perturb and write stability.csv",
        "demo-maop": "multi-agent demo end to end",
        "demo-pcp": "price control demo end to end",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    rc = RunConfig(**{k.replace("-", "_"): v for k, v in vars(args).items()})
    if rc.epsilon is not None and not rc.epsilon > 0:
        print("configuration error: --epsilon must be positive", file=sys.stderr)
        return EXIT_CONFIG
    return run(rc)


if __name__ == "__main__":
    sys.exit(main())
