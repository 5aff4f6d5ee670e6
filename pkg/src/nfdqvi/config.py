"""JSON problem files.

A file is one JSON object with a ``kind`` of ``"problem"``, ``"maop"`` or
``"pcp"``. Matrices are nested arrays; affine maps are objects with an
``offset`` and optional ``state``, ``control`` and ``time`` blocks. Unbounded
box sides are written ``"inf"``/``"-inf"`` (or ``null``). Optional
``solver`` (keyword overrides for :class:`~nfdqvi.solver.SolverConfig`) and
``seed`` entries apply to every kind.

Minimal scalar example::

    {"kind": "problem", "q": 1.0, "horizon": 1.0, "nodes": 257,
     "dynamics": {"f": {"offset": [0], "state": [[-1]]},
                  "g": {"offset": [0], "state": [[0]], "control": [[0]]}},
     "varmap": {"A": [[1]], "B": [[0]]},
     "constraints": {"type": "fixed_box", "lo": [-1], "hi": [1]},
     "nonlocal": {"type": "zero", "x0": [1]}}
"""

import json
from dataclasses import dataclass, field, fields

from .apps import MaopSpec, PcpSpec
from .exceptions import ConfigError
from .fraccalc import TimeGrid
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
)
from .solver import SolverConfig

__all__ = ["LoadedConfig", "load_config", "load_document", "parse_document"]

KINDS = ("problem", "maop", "pcp")


@dataclass(frozen=True, eq=False)
class LoadedConfig:
    kind: str
    obj: object
    solver: dict = field(default_factory=dict)
    seed: int = 0


def _get(doc, key, path, default=...):
    if not isinstance(doc, dict):
        raise ConfigError("expected an object", path)
    if key in doc:
        return doc[key]
    if default is ...:
        raise ConfigError("missing required entry", f"{path}.{key}" if path else key)
    return default


def _bounds(values, sign, path):
    if not isinstance(values, list):
        raise ConfigError("expected an array", path)
    out = []
    for v in values:
        if v is None:
            out.append(sign * float("inf"))
        elif isinstance(v, str):
            try:
                out.append(float(v))
            except ValueError:
                raise ConfigError(f"cannot read {v!r} as a number", path) from None
        else:
            out.append(v)
    return out


def _rebase(exc, prefix):
    """Re-raise a construction error with the section path prepended."""
    where = f"{prefix}.{exc.field}" if exc.field else prefix
    return ConfigError(exc.reason, where)


def _affine(doc, path):
    try:
        return AffineMap(
            offset=_get(doc, "offset", path),
            state=doc.get("state"),
            control=doc.get("control"),
            time=doc.get("time"),
        )
    except ConfigError as exc:
        raise _rebase(exc, path) from None


def _constraints(doc):
    path = "constraints"
    kind = _get(doc, "type", path)
    lo = _bounds(_get(doc, "lo", path), -1, f"{path}.lo")
    hi = _bounds(_get(doc, "hi", path), 1, f"{path}.hi")
    if kind == "fixed_box":
        return FixedBox(lo, hi)
    if kind == "moving_box":
        phi = _get(doc, "phi", path)
        return MovingBox(_affine({"offset": phi.get("offset", [0.0] * len(lo)),
                                  "control": _get(phi, "matrix", f"{path}.phi")},
                                 f"{path}.phi"), lo, hi)
    raise ConfigError(f"unknown type {kind!r} (fixed_box or moving_box)", f"{path}.type")


def _nonlocal(doc):
    path = "nonlocal"
    kind = _get(doc, "type", path)
    x0 = _get(doc, "x0", path)
    if kind == "zero":
        return ZeroNonlocal(x0)
    if kind == "mean_scaled":
        rule = MeanScaled(_get(doc, "coefficients", path), x0)
    elif kind == "point_combination":
        rule = PointCombination(_get(doc, "coefficients", path), _get(doc, "times", path), x0)
    else:
        raise ConfigError(
            f"unknown type {kind!r} (zero, mean_scaled or point_combination)", f"{path}.type"
        )
    if not rule.admissible():
        raise ConfigError(
            f"(H5) needs 0 < coefficient bound < 1, got {rule.coefficient_bound():.6g}",
            f"{path}.coefficients",
        )
    return rule


def _problem(doc):
    grid = TimeGrid(_get(doc, "horizon", "", 1.0), _get(doc, "nodes", "", 257))
    dyn_doc = _get(doc, "dynamics", "")
    dyn = DynamicsSpec(
        _affine(_get(dyn_doc, "f", "dynamics"), "dynamics.f"),
        _affine(_get(dyn_doc, "g", "dynamics"), "dynamics.g"),
    )
    vm = _get(doc, "varmap", "")
    varmap = VariationalMapSpec(
        _get(vm, "A", "varmap"), _get(vm, "B", "varmap"), vm.get("c0"), vm.get("c1"),
        vm.get("lipschitz"),
    )
    return ProblemInstance(
        _get(doc, "q", ""), grid, dyn, varmap,
        _constraints(_get(doc, "constraints", "")), _nonlocal(_get(doc, "nonlocal", "")),
    )


def _spec(cls, doc, affine_fields=()):
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in doc.items():
        if key in ("kind", "solver", "seed"):
            continue
        if key not in known:
            raise ConfigError("unknown entry", key)
        if key in affine_fields:
            value = _affine(value, key)
        elif key in ("lower", "upper"):
            value = _bounds(value, -1 if key == "lower" else 1, key)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"incomplete specification ({exc})", cls.__name__) from None


def parse_document(doc):
    """Build a :class:`LoadedConfig` from an already-parsed JSON object."""
    kind = _get(doc, "kind", "")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {KINDS}", "kind")
    if kind == "problem":
        obj = _problem(doc)
    elif kind == "maop":
        obj = _spec(MaopSpec, doc)
    else:
        obj = _spec(PcpSpec, doc, affine_fields=("chi", "theta"))
    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("expected an object", "solver")
    try:
        SolverConfig(**solver)
    except TypeError as exc:
        raise ConfigError(f"unknown solver option ({exc})", "solver") from None
    except ConfigError as exc:
        raise _rebase(exc, "solver") from None
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer", "seed")
    return LoadedConfig(kind, obj, dict(solver), seed)


def load_document(path):
    """Read and validate a problem file; parse failures raise ConfigError."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read file ({exc.strerror})", str(path)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}", str(path)) from None
    return parse_document(doc)


def load_config(path):
    """Return the :class:`ProblemInstance`, :class:`MaopSpec` or :class:`PcpSpec` in ``path``."""
    return load_document(path).obj
