"""Scenario files: JSON documents describing a system, initial data, inputs, run settings and checks.

A scenario names a built-in system (with its parameters at the top level) or
defines one inline.  Inline maps are exprlang strings; delayed values enter
through named taps such as ``"y": "x2_0(-r)"``.  See README for the layout.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import exprlang
from .comparison import ComparisonFn, from_expr, verify_class
from .errors import ConfigurationError
from .history import BoundedHistory, ContinuousHistory
from .scenarios import BUILTINS, builtin
from .signals import InputSignal, derive_seed
from .solver import CoupledSystem
from .transforms import NeutralSpec, TransportPdeSpec, bellman_to_coupled, hale_to_coupled, pde_to_coupled


class ScenarioError(ConfigurationError):
    """Invalid scenario; ``path`` is the dotted location of the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# ---------------------------------------------------------------- schema

_NUM = {"type": "number"}
_EXPR = {"type": "string", "minLength": 1}
_SCALAR = {"oneOf": [_NUM, _EXPR]}
_VEC = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}
_EXPRS = {"oneOf": [_EXPR, {"type": "array", "items": _EXPR, "minItems": 1}]}
_MATRIX = {"oneOf": [_SCALAR, {"type": "array", "minItems": 1,
                                "items": {"oneOf": [_SCALAR, {"type": "array", "items": _SCALAR, "minItems": 1}]}}]}
_PARAMS = {"type": "object", "additionalProperties": _NUM}

_HISTORY = {"oneOf": [
    _VEC,
    {"type": "object", "required": ["expr"], "additionalProperties": False,
     "properties": {"expr": _EXPRS}},
    {"type": "object", "required": ["table"], "additionalProperties": False,
     "properties": {"table": {"type": "object", "required": ["theta", "values"], "additionalProperties": False,
                              "properties": {"theta": {"type": "array", "items": _NUM, "minItems": 1},
                                             "values": {"type": "array", "minItems": 1}}}}},
]}

_SIGNAL = {"oneOf": [
    _VEC,
    {"type": "object", "required": ["expr"], "additionalProperties": False, "properties": {"expr": _EXPRS}},
    {"type": "object", "required": ["table"], "additionalProperties": False,
     "properties": {"table": {"type": "object", "required": ["times", "values"], "additionalProperties": False,
                              "properties": {"times": {"type": "array", "items": _NUM, "minItems": 1},
                                             "values": {"type": "array", "minItems": 1}}}}},
    {"type": "object", "required": ["random"], "additionalProperties": False,
     "properties": {"random": {"type": "object", "required": ["lo", "hi"], "additionalProperties": False,
                               "properties": {"lo": _VEC, "hi": _VEC, "hold": {"type": "number", "exclusiveMinimum": 0},
                                              "seed": {"type": "integer", "minimum": 0}}}}},
]}

_TAPS = {"type": "object", "additionalProperties": {"type": "string"}}

_COUPLED = {
    "type": "object", "required": ["kind", "n1", "n2", "r1", "r2", "tau", "f1"],
    "additionalProperties": False,
    "properties": {
        "kind": {"const": "coupled"}, "name": {"type": "string"},
        "n1": {"type": "integer", "minimum": 0}, "n2": {"type": "integer", "minimum": 0},
        "r1": {"type": "number", "minimum": 0}, "r2": {"type": "number", "minimum": 0},
        "tau": _SCALAR, "f1": {"type": "array", "items": _EXPR}, "f2": {"type": "array", "items": _EXPR},
        "H": {"type": "array", "items": _EXPR}, "taps": _TAPS, "params": _PARAMS,
        "m": {"type": "integer", "minimum": 0}, "d_dim": {"type": "integer", "minimum": 0},
        "d_bounds": {"type": "array", "items": _VEC, "minItems": 2, "maxItems": 2},
        "envelope": {"type": "object", "required": ["a", "beta"], "additionalProperties": False,
                     "properties": {"a": _EXPR, "beta": _EXPR}},
    },
}

_NEUTRAL = {
    "type": "object", "required": ["kind", "form", "n", "r", "tau", "f"], "additionalProperties": False,
    "properties": {
        "kind": {"const": "neutral"}, "name": {"type": "string"}, "form": {"enum": ["hale", "bellman"]},
        "n": {"type": "integer", "minimum": 1}, "r": {"type": "number", "exclusiveMinimum": 0}, "tau": _SCALAR,
        "f": {"type": "array", "items": _EXPR, "minItems": 1}, "g": {"type": "array", "items": _EXPR, "minItems": 1},
        "taps": _TAPS, "params": _PARAMS, "m": {"type": "integer", "minimum": 0},
        "d_dim": {"type": "integer", "minimum": 0},
        "d_bounds": {"type": "array", "items": _VEC, "minItems": 2, "maxItems": 2},
    },
}

_PDE = {
    "type": "object", "required": ["kind", "a", "lam", "boundary", "v0"], "additionalProperties": False,
    "properties": {
        "kind": {"const": "transport_pde"}, "name": {"type": "string"},
        "a": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "lam": {"type": "array", "items": _NUM, "minItems": 1},
        "boundary": {"type": "array", "items": _EXPR, "minItems": 1},
        "ode": {"type": "array", "items": _EXPR}, "xi0": {"type": "array", "items": _NUM},
        "v0": {"type": "array", "items": _EXPR, "minItems": 1}, "params": _PARAMS,
        "m": {"type": "integer", "minimum": 0}, "d_dim": {"type": "integer", "minimum": 0},
    },
}

_LTV = {
    "type": "object", "required": ["kind", "A", "B", "C", "D", "r", "P", "mu"], "additionalProperties": False,
    "properties": {
        "kind": {"const": "linear_tv"}, "name": {"type": "string"},
        "A": _MATRIX, "B": _MATRIX, "C": _MATRIX, "D": _MATRIX, "G1": _MATRIX, "G2": _MATRIX, "P": _MATRIX,
        "mu": _SCALAR, "r": {"type": "number", "exclusiveMinimum": 0}, "params": _PARAMS,
    },
}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["system"],
    "properties": {
        "system": {"oneOf": [{"enum": sorted(BUILTINS)}, _COUPLED, _NEUTRAL, _PDE, _LTV]},
        "initial": {"type": "object", "additionalProperties": False,
                    "properties": {"x1": _HISTORY, "x2": _HISTORY, "x": _HISTORY, "xdot": _HISTORY}},
        "inputs": {"type": "object", "additionalProperties": False, "properties": {"d": _SIGNAL, "u": _SIGNAL}},
        "run": {"type": "object", "required": ["horizon"], "additionalProperties": False,
                "properties": {"horizon": {"type": "number", "exclusiveMinimum": 0},
                               "t0": _NUM,
                               "substep": {"type": "number", "exclusiveMinimum": 0},
                               "substeps_per_step": {"type": "integer", "minimum": 1},
                               "seed": {"type": "integer", "minimum": 0},
                               "blowup_norm": {"type": "number", "exclusiveMinimum": 0}}},
        "certify": {"type": "object", "additionalProperties": False,
                    "properties": {"checks": {"type": "array", "items": {"type": "string"}},
                                   "options": {"type": "object"}}},
    },
}

_TOP_LEVEL = set(SCHEMA["properties"])


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = [p for p in err.validator_value if isinstance(err.instance, dict) and p not in err.instance]
        if missing:
            parts.append(missing[0])
    return ".".join(parts) or "<root>"


def _deepest(err: jsonschema.ValidationError) -> jsonschema.ValidationError:
    """Descend into ``oneOf`` alternatives, following the one whose ``kind`` matches the instance."""
    while err.validator == "oneOf" and err.context:
        inst = err.instance
        branches = err.validator_value
        pick = None
        if isinstance(inst, dict) and "kind" in inst:
            pick = next((i for i, b in enumerate(branches)
                         if b.get("properties", {}).get("kind", {}).get("const") == inst["kind"]), None)
        elif isinstance(inst, dict) and "kind" not in inst:
            pick = next((i for i, b in enumerate(branches) if b.get("type") == "object"), None)
        candidates = [e for e in err.context if pick is None or e.relative_schema_path[0] == pick]
        if not candidates:
            break
        err = min(candidates, key=lambda e: len(e.relative_schema_path))
    return err


def validate_document(doc: Any) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), str(e.message)))
    if not errors:
        return
    err = _deepest(errors[0])
    raise ScenarioError(err.message, _error_path(err))


# ---------------------------------------------------------------- scenario

@dataclass
class Scenario:
    """A loaded, validated scenario ready to simulate or certify."""

    system: CoupledSystem
    x10: Any = None
    x20: Any = None
    d: Any = None
    u: Any = None
    horizon: float = 1.0
    t0: float = 0.0
    substep: float | None = None
    substeps_per_step: int = 256
    seed: int = 0
    blowup_norm: float = 1e12
    checks: list[str] = field(default_factory=list)
    options: dict = field(default_factory=dict)
    builtin: str | None = None
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    document: dict = field(default_factory=dict)

    def solve_kwargs(self) -> dict:
        return {"x10": self.x10, "x20": self.x20, "d": self.d, "u": self.u, "horizon": self.horizon,
                "t0": self.t0, "substep": self.substep, "substeps_per_step": self.substeps_per_step,
                "blowup_norm": self.blowup_norm}


DEFAULT_CHECKS = {
    "example_1_8": ["hypotheses", "robust_equilibrium"],
    "example_4_1": ["small_gain"],
    "example_4_19": ["linear_tv"],
    "ex1_3_feedback": ["hypotheses"],
    "riccati": ["hypotheses"],
}


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate ``doc`` and build the scenario it describes."""
    validate_document(doc)
    doc = copy.deepcopy(doc)
    sys_doc = doc["system"]
    if isinstance(sys_doc, str):
        scn = _from_builtin(sys_doc, doc)
    else:
        if "run" not in doc:
            raise ScenarioError("'horizon' is a required property", "run.horizon")
        scn = _from_definition(sys_doc, doc)
    run = doc.get("run", {})
    scn.horizon = float(run.get("horizon", scn.horizon))
    scn.t0 = float(run.get("t0", 0.0))
    if "substep" in run:
        scn.substep = float(run["substep"])
    if "substeps_per_step" in run:
        scn.substeps_per_step = int(run["substeps_per_step"])
        if "substep" not in run:
            scn.substep = None
    scn.seed = int(run.get("seed", 0))
    scn.blowup_norm = float(run.get("blowup_norm", 1e12))
    _apply_initial(scn, doc.get("initial"))
    _apply_inputs(scn, doc.get("inputs"))
    cert = doc.get("certify", {})
    scn.checks = list(cert.get("checks", DEFAULT_CHECKS.get(scn.builtin or "", ["hypotheses"])))
    scn.options = dict(cert.get("options", {}))
    scn.document = doc
    return scn


def _from_builtin(name: str, doc: dict) -> Scenario:
    params = {k: v for k, v in doc.items() if k not in _TOP_LEVEL}
    for k, v in params.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ScenarioError("built-in parameters must be numbers", k)
    try:
        b = builtin(name, **params)
    except ConfigurationError as exc:
        raise ScenarioError(str(exc), "system") from exc
    return Scenario(b.system, b.x10, b.x20, b.d, b.u, b.horizon, substep=b.substep,
                    substeps_per_step=b.substeps_per_step, builtin=name, params=dict(b.params, **params),
                    extra=dict(b.extra))


# ---------------------------------------------------------------- expressions and taps

_TAP = re.compile(r"^\s*(x1|x2|x|xdot)_(\d+)\s*\((.*)\)\s*$")
_RESERVED = {"t"}


def _compile(src: str, allowed: set[str], path: str) -> Callable[[dict], Any]:
    try:
        tree = exprlang.parse(src)
    except exprlang.ExprSyntaxError as exc:
        raise ScenarioError(f"{exc} in {src!r}", path) from exc
    except exprlang.ExprError as exc:
        raise ScenarioError(f"{exc} in {src!r}", path) from exc
    free = exprlang.free_vars(tree)
    missing = sorted(free - allowed)
    if missing:
        raise ScenarioError(f"unbound identifiers {missing} in {src!r} (free variables: {sorted(free)})", path)
    return exprlang.compile_expr(tree)


def _const(src, params: dict, path: str) -> float:
    if isinstance(src, (int, float)):
        return float(src)
    fn = _compile(src, set(params), path)
    with np.errstate(all="ignore"):
        return float(fn(params))


def _parse_taps(taps: dict, params: dict, channels: set[str], dims: dict[str, int], path: str):
    out = []
    for name, spec in taps.items():
        if name in params or name in _RESERVED:
            raise ScenarioError(f"tap name {name!r} clashes with a parameter or reserved name", f"{path}.{name}")
        m = _TAP.match(spec)
        if not m or m.group(1) not in channels:
            raise ScenarioError(f"tap must look like CHANNEL_INDEX(OFFSET) with CHANNEL in {sorted(channels)}",
                                f"{path}.{name}")
        ch, idx = m.group(1), int(m.group(2))
        if idx >= dims[ch]:
            raise ScenarioError(f"component {idx} out of range for {ch} (dimension {dims[ch]})", f"{path}.{name}")
        offset = _const(m.group(3), params, f"{path}.{name}")
        if offset > 0:
            raise ScenarioError("tap offsets must be <= 0", f"{path}.{name}")
        out.append((name, ch, idx, offset))
    return out


def _vec_names(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{i}" for i in range(n)]


def _time_fn(src, params: dict, path: str, var: str = "t") -> Callable[[float], float] | float:
    if isinstance(src, (int, float)):
        return float(src)
    fn = _compile(src, set(params) | {var}, path)

    def at(t):
        return float(fn(dict(params, **{var: t})))
    return at


def _from_definition(sd: dict, doc: dict) -> Scenario:
    kind = sd["kind"]
    if kind == "coupled":
        return _coupled(sd)
    if kind == "neutral":
        return _neutral(sd)
    if kind == "transport_pde":
        return _transport(sd)
    return _linear_tv(sd)


def _env_builder(params, taps, d_dim, m, extra_now):
    """Returns ``env(t, d, u, views) -> dict`` for compiled maps."""
    def env(t, d, u, views):
        e = dict(params)
        e["t"] = t
        for i in range(d_dim):
            e[f"d_{i}"] = float(d[i])
        for i in range(m):
            e[f"u_{i}"] = float(u[i])
        for name, ch, idx, off in taps:
            e[name] = float(views[ch](off)[idx])
        for ch, n in extra_now:
            v = views[ch](0.0)
            for i in range(n):
                e[f"{ch}_{i}"] = float(v[i])
        return e
    return env


def _vector_map(fns, env):
    def call(t, d, u, views):
        e = env(t, d, u, views)
        return np.array([float(f(e)) for f in fns])
    return call


def _d_bounds(sd, d_dim, path):
    if "d_bounds" not in sd:
        return None
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (d_dim,)) for b in sd["d_bounds"])
    if np.any(lo > hi):
        raise ScenarioError("lower disturbance bound exceeds the upper", f"{path}.d_bounds")
    return lo, hi


def _coupled(sd: dict) -> Scenario:
    params = dict(sd.get("params", {}))
    n1, n2, m, dd = sd["n1"], sd["n2"], sd.get("m", 0), sd.get("d_dim", 0)
    taps = _parse_taps(sd.get("taps", {}), params, {"x1", "x2"}, {"x1": n1, "x2": n2}, "system.taps")
    base = set(params) | {"t"} | set(_vec_names("d", dd)) | set(_vec_names("u", m)) | {t[0] for t in taps}
    now1 = set(_vec_names("x1", n1))
    f1s = [_compile(s, base | now1, f"system.f1.{i}") for i, s in enumerate(sd["f1"])]
    f2s = [_compile(s, base | now1, f"system.f2.{i}") for i, s in enumerate(sd.get("f2", []))]
    Hs = [_compile(s, base | now1 | set(_vec_names("x2", n2)), f"system.H.{i}") for i, s in enumerate(sd.get("H", []))]
    if len(f1s) != n1:
        raise ScenarioError(f"expected {n1} expressions, got {len(f1s)}", "system.f1")
    if len(f2s) != n2:
        raise ScenarioError(f"expected {n2} expressions, got {len(f2s)}", "system.f2")
    tau = _time_fn(sd["tau"], params, "system.tau")
    ev = _env_builder(params, taps, dd, m, [("x1", n1)])
    evH = _env_builder(params, taps, dd, 0, [("x1", n1), ("x2", n2)])
    F1, F2 = _vector_map(f1s, ev), _vector_map(f2s, ev)
    HH = _vector_map(Hs, evH) if Hs else None
    zero_d = np.zeros(dd)

    def f1(t, d, x1, x2, u):
        return F1(t, d, u, {"x1": x1, "x2": x2})

    def f2(t, d, x1, x2, u):
        return F2(t, d, u, {"x1": x1, "x2": x2})

    H = None if HH is None else (lambda t, x1, x2: HH(t, zero_d, None, {"x1": x1, "x2": x2}))
    envelope = None
    if "envelope" in sd:
        _compile(sd["envelope"]["a"], set(params) | {"s"}, "system.envelope.a")
        _compile(sd["envelope"]["beta"], set(params) | {"t"}, "system.envelope.beta")
        a = from_expr(sd["envelope"]["a"], "s", "K_inf", params=params)
        beta = from_expr(sd["envelope"]["beta"], "t", "K_plus", params=params)
        for fn, where in ((a, "system.envelope.a"), (beta, "system.envelope.beta")):
            rep = verify_class(fn)
            if not rep.passed:
                raise ScenarioError(f"claimed class {fn.claimed_class} not verified: {rep.witness}", where)
        envelope = (a, beta)
    sys = CoupledSystem(n1, n2, float(sd["r1"]), float(sd["r2"]), tau, f1, f2 if n2 else None, H=H, m=m, d_dim=dd,
                        d_bounds=_d_bounds(sd, dd, "system"), envelope=envelope, name=sd.get("name", "custom"),
                        meta={"params": params})
    return Scenario(sys, params=params)


class _CallableView:
    """Offset view over a plain function of theta, shifted to a reference offset."""

    def __init__(self, fn, base: float = 0.0):
        self.fn, self.base = fn, base

    def __call__(self, theta: float = 0.0):
        return self.fn(self.base + theta)


def _neutral(sd: dict) -> Scenario:
    params = dict(sd.get("params", {}))
    n, m, dd, form = sd["n"], sd.get("m", 0), sd.get("d_dim", 0), sd["form"]
    channels = {"x", "xdot"} if form == "bellman" else {"x"}
    taps = _parse_taps(sd.get("taps", {}), params, channels, {"x": n, "xdot": n}, "system.taps")
    base = set(params) | {"t"} | set(_vec_names("d", dd)) | set(_vec_names("u", m)) | {t[0] for t in taps}
    fs = [_compile(s, base | set(_vec_names("x", n)), f"system.f.{i}") for i, s in enumerate(sd["f"])]
    if len(fs) != n:
        raise ScenarioError(f"expected {n} expressions, got {len(fs)}", "system.f")
    tau = _time_fn(sd["tau"], params, "system.tau")
    F = _vector_map(fs, _env_builder(params, taps, dd, m, [("x", n)]))
    g = None
    if form == "hale":
        if "g" not in sd:
            raise ScenarioError("'g' is a required property for the hale form", "system.g")
        gs = [_compile(s, set(params) | {"t"} | {t[0] for t in taps}, f"system.g.{i}") for i, s in enumerate(sd["g"])]
        if len(gs) != n:
            raise ScenarioError(f"expected {n} expressions, got {len(gs)}", "system.g")
        G = _vector_map(gs, _env_builder(params, taps, 0, 0, []))

        def g(t, xview):
            return G(t, None, None, {"x": xview})

        def f(t, d, xview, u):
            return F(t, d, u, {"x": xview})
    else:
        if "g" in sd:
            raise ScenarioError("the bellman form takes no difference operator", "system.g")

        def f(t, d, xview, xdview, u):
            return F(t, d, u, {"x": xview, "xdot": xdview})
    spec = NeutralSpec(form, n, float(sd["r"]), tau, f, g, m=m, d_dim=dd, d_bounds=_d_bounds(sd, dd, "system"),
                       name=sd.get("name", "neutral"))
    sys = hale_to_coupled(spec) if form == "hale" else bellman_to_coupled(spec)
    return Scenario(sys, params=params, extra={"neutral": spec})


def _transport(sd: dict) -> Scenario:
    params = dict(sd.get("params", {}))
    p = len(sd["a"])
    if len(sd["lam"]) != p or len(sd["v0"]) != p or len(sd["boundary"]) != p:
        raise ScenarioError(f"a, lam, v0 and boundary need {p} entries each", "system")
    xi0 = [float(v) for v in sd.get("xi0", [])]
    k, m, dd = len(xi0), sd.get("m", 0), sd.get("d_dim", 0)
    names = set(params) | {"t"} | set(_vec_names("w", p)) | set(_vec_names("xi", k)) \
        | set(_vec_names("u", m)) | set(_vec_names("d", dd))
    bs = [_compile(s, names, f"system.boundary.{i}") for i, s in enumerate(sd["boundary"])]
    os_ = [_compile(s, names, f"system.ode.{i}") for i, s in enumerate(sd.get("ode", []))]
    if len(os_) != k:
        raise ScenarioError(f"expected {k} expressions (one per xi0 entry), got {len(os_)}", "system.ode")
    v0s = [_compile(s, set(params) | {"z"}, f"system.v0.{i}") for i, s in enumerate(sd["v0"])]

    def env(t, d, xi, u, w):
        e = dict(params, t=t)
        for pre, vec in (("w", w), ("xi", xi), ("u", u), ("d", d)):
            for i, v in enumerate(np.atleast_1d(vec) if vec is not None else ()):
                e[f"{pre}_{i}"] = float(v)
        return e

    def boundary(t, d, xi, u, w):
        e = env(t, d, xi, u, w)
        return np.array([float(b(e)) for b in bs])

    def ode(t, d, xi, u, w):
        e = env(t, d, xi, u, w)
        return np.array([float(o(e)) for o in os_])

    v0 = [(lambda z, c=c: float(c(dict(params, z=z)))) for c in v0s]
    spec = TransportPdeSpec(a=[float(x) for x in sd["a"]], lam=[float(x) for x in sd["lam"]], boundary=boundary,
                            v0=v0, ode=ode if k else None, xi0=xi0, m=m, d_dim=dd,
                            boundary_src=list(sd["boundary"]), ode_src=list(sd.get("ode", [])))
    red = pde_to_coupled(spec, warmup=False)
    return Scenario(red.system, red.x10, red.x20, substep=2 * red.x2_spacing, params=params,
                    extra={"pde": spec, "reduction": red})


def _matrix(src, params: dict, path: str):
    """Matrix of constants or expressions in t; returns a constant array or a function of t."""
    rows = src if isinstance(src, list) else [[src]]
    rows = [r if isinstance(r, list) else [r] for r in rows]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ScenarioError("matrix rows must have equal length", path)
    cells = [[_time_fn(c, params, f"{path}.{i}.{j}") for j, c in enumerate(r)] for i, r in enumerate(rows)]
    if all(not callable(c) for r in cells for c in r):
        return np.array(cells, dtype=float)

    def at(t):
        return np.array([[c(t) if callable(c) else c for c in r] for r in cells], dtype=float)
    return at


def _linear_tv(sd: dict) -> Scenario:
    from .certify.linear_tv import LinearTvSystem

    params = dict(sd.get("params", {}))
    mats = {k: _matrix(sd[k], params, f"system.{k}") for k in ("A", "B", "C", "D", "P") if k in sd}
    for k in ("G1", "G2"):
        if k in sd:
            mats[k] = _matrix(sd[k], params, f"system.{k}")
    mu_src = sd["mu"]
    if isinstance(mu_src, (int, float)):
        mu = ComparisonFn(lambda t, c=float(mu_src): c if np.ndim(t) == 0 else np.full(np.shape(t), c), "K_plus",
                          name=repr(float(mu_src)))
    else:
        _compile(mu_src, set(params) | {"t"}, "system.mu")
        mu = from_expr(mu_src, "t", "K_plus", domain=(0.0, 20.0), params=params)
    constant = all(not callable(v) for v in mats.values()) and isinstance(mu_src, (int, float))
    try:
        lsys = LinearTvSystem(mats["A"], mats["B"], mats["C"], mats["D"], float(sd["r"]), mats["P"], mu,
                              G1=mats.get("G1"), G2=mats.get("G2"), constant=constant,
                              name=sd.get("name", "linear_tv"))
    except ConfigurationError as exc:
        raise ScenarioError(str(exc), "system") from exc
    return Scenario(lsys.to_coupled(), params=params, extra={"linear_tv": lsys})


# ---------------------------------------------------------------- initial data and inputs

def _history_fn(spec, dim: int, params: dict, path: str):
    """Constant, expression in theta, or table; returns (kind, payload)."""
    if isinstance(spec, (int, float, list)):
        v = np.atleast_1d(np.asarray(spec, dtype=float))
        if v.size not in (1, dim):
            raise ScenarioError(f"expected {dim} values, got {v.size}", path)
        return "const", np.broadcast_to(v, (dim,)).copy()
    if "expr" in spec:
        srcs = spec["expr"] if isinstance(spec["expr"], list) else [spec["expr"]]
        if len(srcs) != dim:
            raise ScenarioError(f"expected {dim} expressions, got {len(srcs)}", f"{path}.expr")
        fns = [_compile(s, set(params) | {"theta"}, f"{path}.expr.{i}") for i, s in enumerate(srcs)]
        return "fn", (lambda th: np.array([float(f(dict(params, theta=th))) for f in fns]))
    tab = spec["table"]
    th = np.asarray(tab["theta"], dtype=float)
    vals = np.asarray(tab["values"], dtype=float).reshape(th.size, -1)
    if vals.shape[1] != dim:
        raise ScenarioError(f"table rows need {dim} values", f"{path}.table.values")
    if np.any(np.diff(th) < 0) or th[-1] != 0.0:
        raise ScenarioError("theta must be non-decreasing and end at 0", f"{path}.table.theta")
    return "table", (th, vals)


def _apply_initial(scn: Scenario, init: dict | None) -> None:
    if not init:
        return
    sys, p = scn.system, scn.params
    if "pde" in scn.extra:
        raise ScenarioError("transport scenarios take their initial data from v0 and xi0", "initial")
    if "x" in init or "xdot" in init:
        _apply_neutral_initial(scn, init)
        return
    t0 = scn.t0
    if "x1" in init:
        kind, val = _history_fn(init["x1"], sys.n1, p, "initial.x1")
        if kind == "table":
            th, v = val
            if th.size == 1:
                scn.x10 = ContinuousHistory(t0, v[0])
            else:
                scn.x10 = ContinuousHistory.from_samples(t0 + th, v)
        else:
            scn.x10 = val
    if "x2" in init:
        kind, val = _history_fn(init["x2"], sys.n2, p, "initial.x2")
        scn.x20 = BoundedHistory(t0 + val[0], val[1]) if kind == "table" else val


def _apply_neutral_initial(scn: Scenario, init: dict) -> None:
    spec = scn.extra.get("neutral")
    if spec is None:
        raise ScenarioError("'x'/'xdot' initial data apply to neutral systems only", "initial")
    if "x" not in init:
        raise ScenarioError("'x' is a required property", "initial.x")
    kind, val = _history_fn(init["x"], spec.n, scn.params, "initial.x")
    if kind == "table":
        th, v = val
        xfn = lambda s: np.array([np.interp(s, th, v[:, i]) for i in range(spec.n)])
    elif kind == "const":
        xfn = lambda s, c=val: c
    else:
        xfn = val
    if spec.form == "hale":
        g = spec.g
        scn.x20 = xfn
        scn.x10 = lambda th: xfn(th) - np.asarray(g(scn.t0 + th, _CallableView(xfn, th)), dtype=float)
    else:
        scn.x10 = xfn
        if "xdot" in init:
            k2, v2 = _history_fn(init["xdot"], spec.n, scn.params, "initial.xdot")
            scn.x20 = (lambda s, c=v2: c) if k2 == "const" else v2 if k2 == "fn" else \
                (lambda s, th=v2[0], v=v2[1]: np.array([np.interp(s, th, v[:, i]) for i in range(spec.n)]))
        else:
            h = 1e-6
            scn.x20 = lambda th: (xfn(min(th + h, 0.0)) - xfn(max(th - h, -2 * spec.r))) / (
                min(th + h, 0.0) - max(th - h, -2 * spec.r))


def _signal(spec, dim: int, params: dict, seed: int, path: str):
    if isinstance(spec, (int, float, list)):
        v = np.atleast_1d(np.asarray(spec, dtype=float))
        if v.size not in (1, dim):
            raise ScenarioError(f"expected {dim} values, got {v.size}", path)
        return InputSignal.constant(np.broadcast_to(v, (dim,)))
    if "expr" in spec:
        srcs = spec["expr"] if isinstance(spec["expr"], list) else [spec["expr"]]
        if len(srcs) != dim:
            raise ScenarioError(f"expected {dim} expressions, got {len(srcs)}", f"{path}.expr")
        for i, s in enumerate(srcs):
            _compile(s, set(params) | {"t"}, f"{path}.expr.{i}")
        return InputSignal.expression(srcs, params)
    if "table" in spec:
        try:
            sig = InputSignal.table(spec["table"]["times"], spec["table"]["values"])
        except (ConfigurationError, ValueError) as exc:
            raise ScenarioError(str(exc), f"{path}.table") from exc
        if sig.dim != dim:
            raise ScenarioError(f"table rows need {dim} values", f"{path}.table.values")
        return sig
    r = spec["random"]
    return InputSignal.random(dim, r["lo"], r["hi"], int(r.get("seed", seed)), float(r.get("hold", 1.0)))


def _apply_inputs(scn: Scenario, inputs: dict | None) -> None:
    if not inputs:
        return
    sys = scn.system
    for key, dim, k in (("d", sys.d_dim, 1), ("u", sys.m, 2)):
        if key in inputs:
            if dim == 0:
                raise ScenarioError(f"system has no {key} channel", f"inputs.{key}")
            sig = _signal(inputs[key], dim, scn.params, derive_seed(scn.seed, k), f"inputs.{key}")
            setattr(scn, key, sig)


def with_parameter(doc: dict, name: str, value: float) -> dict:
    """Copy of ``doc`` with one parameter replaced.

    Dotted names address the document directly (``run.horizon``); bare names
    are built-in parameters or entries of ``system.params``.
    """
    out = copy.deepcopy(doc)
    if "." in name:
        node = out
        keys = name.split(".")
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise ScenarioError("no such field", name)
            node = node[k]
        node[keys[-1]] = value
    elif isinstance(out.get("system"), str):
        if name in _TOP_LEVEL:
            raise ScenarioError("not a parameter", name)
        out[name] = value
    else:
        out["system"].setdefault("params", {})[name] = value
    return out


def builtin_document(name: str, **params) -> dict:
    if name not in BUILTINS:
        raise ScenarioError(f"unknown built-in system {name!r}", "system")
    return {"system": name, **params}


def is_finite_number(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)
