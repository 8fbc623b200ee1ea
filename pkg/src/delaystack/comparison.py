"""Comparison functions, their grid-checked class tags and small-gain conditions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import exprlang
from .errors import ConfigurationError, EvaluationError
from .report import CertificateReport

CLASSES = ("N", "K", "K_inf", "K_plus", "positive_definite")
DEFAULT_TOL = 1e-9
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class ComparisonFn:
    """A scalar function on ``[0, s_max]`` tagged with the class it claims to belong to."""

    body: Callable
    claimed_class: str = "N"
    domain_hint: tuple[float, float] = (0.0, 10.0)
    name: str = "fn"

    def __post_init__(self):
        if self.claimed_class not in CLASSES:
            raise ConfigurationError(f"unknown class {self.claimed_class!r}; expected one of {CLASSES}")
        lo, hi = self.domain_hint
        if not (np.isfinite(lo) and np.isfinite(hi) and 0 <= lo < hi):
            raise ConfigurationError(f"invalid domain_hint {self.domain_hint!r}")

    def __call__(self, s):
        if np.ndim(s) == 0:
            return float(self.body(float(s)))
        arr = np.asarray(s, dtype=float)
        try:
            out = np.asarray(self.body(arr), dtype=float)
            if out.shape == arr.shape:
                return out
            if out.ndim == 0:
                return np.full(arr.shape, float(out))
        except (TypeError, ValueError):
            pass
        return np.array([float(self.body(float(x))) for x in arr.ravel()]).reshape(arr.shape)

    def with_class(self, claimed_class: str) -> "ComparisonFn":
        return ComparisonFn(self.body, claimed_class, self.domain_hint, self.name)


# ------------------------------------------------------------------ builtins

def identity(domain=(0.0, 10.0)) -> ComparisonFn:
    return ComparisonFn(lambda s: s, "K_inf", domain, "identity")


def linear(k: float, domain=(0.0, 10.0)) -> ComparisonFn:
    k = float(k)
    cls = "K_inf" if k > 0 else "N"
    return ComparisonFn(lambda s: k * s, cls, domain, f"linear({k!r})")


def power(p: float, domain=(0.0, 10.0)) -> ComparisonFn:
    p = float(p)
    if p <= 0:
        raise ConfigurationError("power(p) needs p > 0")
    return ComparisonFn(lambda s: np.power(s, p), "K_inf", domain, f"power({p!r})")


def exp_decay(k: float, domain=(0.0, 10.0)) -> ComparisonFn:
    k = float(k)
    return ComparisonFn(lambda t: np.exp(-k * np.asarray(t, dtype=float)) if np.ndim(t) else float(np.exp(-k * t)),
                        "K_plus", domain, f"exp_decay({k!r})")


def const(c: float, domain=(0.0, 10.0)) -> ComparisonFn:
    c = float(c)
    cls = "K_plus" if c > 0 else "N"
    return ComparisonFn(lambda t: c if np.ndim(t) == 0 else np.full(np.shape(t), c),
                        cls, domain, f"const({c!r})")


def zero(domain=(0.0, 10.0)) -> ComparisonFn:
    return const(0.0, domain)


def from_expr(src: str, var: str = "s", claimed_class: str = "N", domain=(0.0, 10.0),
              params: dict | None = None) -> ComparisonFn:
    """Build a comparison function from an expression in one free variable."""
    tree = exprlang.parse(src)
    params = dict(params or {})
    unbound = exprlang.free_vars(tree) - {var} - set(params)
    if unbound:
        raise exprlang.UnboundVariableError(", ".join(sorted(unbound)))
    code = exprlang.compile_expr(tree)

    def body(s):
        env = dict(params)
        env[var] = s
        with np.errstate(over="ignore"):
            out = code(env)
        return out if np.ndim(s) == 0 else np.broadcast_to(out, np.shape(s))
    return ComparisonFn(body, claimed_class, domain, src)


_NAMED = {"identity": identity, "linear": linear, "power": power,
          "exp_decay": exp_decay, "const": const, "zero": zero}


def named(name: str, *args, domain=(0.0, 10.0)) -> ComparisonFn:
    try:
        factory = _NAMED[name]
    except KeyError:
        raise ConfigurationError(f"unknown built-in comparison function {name!r}") from None
    return factory(*args, domain=domain)


# ------------------------------------------------------------------ grids

def class_grid(fn: ComparisonFn, grid_points: int = 512) -> np.ndarray:
    """Log-spaced samples over the domain hint (0 included when the domain starts there)."""
    if grid_points < 2:
        raise ConfigurationError("grid_points must be >= 2")
    lo, hi = fn.domain_hint
    if lo == 0.0:
        return np.concatenate(([0.0], np.geomspace(hi * 1e-6, hi, grid_points - 1)))
    return np.geomspace(lo, hi, grid_points)


def _values(fn: ComparisonFn, grid: np.ndarray) -> np.ndarray:
    vals = np.asarray(fn(grid), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        s = float(grid[np.argmax(bad)])
        raise EvaluationError(f"{fn.name} is not finite at sample s={s!r}")
    return vals


def verify_class(fn: ComparisonFn, grid_points: int = 512) -> CertificateReport:
    grid = class_grid(fn, grid_points)
    vals = _values(fn, grid)
    cls = fn.claimed_class
    idx = np.arange(grid.size)
    at_zero = grid[0] == 0.0
    # (label, slack per sample, grid index of each sample); slack < 0 is a violation
    checks: list[tuple[str, np.ndarray, np.ndarray]] = []
    if cls in ("N", "K", "K_inf", "positive_definite") and at_zero:
        checks.append(("vanishes at 0", np.array([ZERO_TOL - abs(vals[0])]), idx[:1]))
    diffs = np.diff(vals)
    if cls == "N":
        checks.append(("non-decreasing", diffs, idx[1:]))
    elif cls in ("K", "K_inf"):
        # ties fail: give them a tiny negative slack
        checks.append(("strictly increasing", np.where(diffs > 0, diffs, diffs - 1e-300), idx[1:]))
    elif cls == "K_plus":
        checks.append(("positive", np.where(vals > 0, vals, vals - 1e-300), idx))
    elif cls == "positive_definite":
        sl = slice(1, None) if at_zero else slice(None)
        pos = vals[sl]
        checks.append(("positive away from 0", np.where(pos > 0, pos, pos - 1e-300), idx[sl]))

    margin = float("inf")
    witness = None
    for label, slack, where in checks:
        k = int(np.argmin(slack))
        margin = min(margin, float(slack[k]))
        bad = np.flatnonzero(slack < 0)
        if bad.size and witness is None:
            i = int(where[bad[0]])
            witness = {"property": label, "s": float(grid[i]), "value": float(vals[i])}
            if label in ("non-decreasing", "strictly increasing"):
                witness["previous_s"] = float(grid[i - 1])
                witness["previous_value"] = float(vals[i - 1])
    return CertificateReport(
        check=f"verify_class[{cls}]",
        passed=witness is None,
        margin=margin,
        witness=witness,
        resolution={"grid_points": int(grid.size), "spacing": "log", "domain": list(fn.domain_hint)},
        parameters={"function": fn.name, "claimed_class": cls},
    )


# ------------------------------------------------------------------ algebra

def small_gain_composite(gamma: ComparisonFn, rho: ComparisonFn) -> ComparisonFn:
    """g(s) = gamma(s) + rho(gamma(s))."""
    def body(s):
        g = gamma(s)
        return g + rho(g)
    return ComparisonFn(body, "N", gamma.domain_hint, f"({gamma.name}) + rho({gamma.name})")


@dataclass(frozen=True)
class GainPair:
    """Gains and weights of one subsystem: v-channel and u-channel."""

    gamma: ComparisonFn
    gamma_u: ComparisonFn = field(default_factory=zero)
    delta: ComparisonFn = field(default_factory=lambda: const(1.0))
    delta_u: ComparisonFn = field(default_factory=lambda: const(1.0))
    q_u: ComparisonFn = field(default_factory=lambda: const(1.0))


def combined_weight(gains1: GainPair, gains2: GainPair) -> ComparisonFn:
    parts = (gains1.delta_u, gains2.delta_u, gains1.q_u, gains2.q_u)

    def body(t):
        return np.maximum.reduce([np.asarray(p(t), dtype=float) for p in parts]) if np.ndim(t) \
            else max(p(t) for p in parts)
    domain = (0.0, max(p.domain_hint[1] for p in parts))
    return ComparisonFn(body, "K_plus", domain, "max(" + ", ".join(p.name for p in parts) + ")")


def _grid(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise ConfigurationError(f"{name} is empty")
    return arr


DEFAULT_S_GRID = np.geomspace(1e-3, 1e3, 61)
DEFAULT_T_GRID = np.linspace(0.0, 20.0, 201)


def _prefix_max(fn: ComparisonFn, t_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.sort(t_grid)
    return t, np.maximum.accumulate(_values(fn, t))


def check_cycle_condition(g1: ComparisonFn, g2: ComparisonFn, delta1: ComparisonFn, delta2: ComparisonFn,
                          direction: str = "forward", s_grid: Sequence[float] | None = None,
                          t_grid: Sequence[float] | None = None, bound_M: float = 1.0,
                          tol: float = DEFAULT_TOL) -> CertificateReport:
    """Check delta1 <= M and g1(delta1(t) g2(max_{[0,t]} delta2 * s)) <= s on the grids.

    Samples with s <= 0 are skipped: both sides vanish there.
    """
    s = _grid(DEFAULT_S_GRID if s_grid is None else s_grid, "s_grid")
    t = _grid(DEFAULT_T_GRID if t_grid is None else t_grid, "t_grid")
    if direction == "reverse":
        g1, g2, delta1, delta2 = g2, g1, delta2, delta1
    elif direction != "forward":
        raise ConfigurationError(f"direction must be 'forward' or 'reverse', got {direction!r}")
    s = s[s > 0]
    if s.size == 0:
        raise ConfigurationError("s_grid has no positive samples")
    t, pm = _prefix_max(delta2, t)
    d1 = _values(delta1, t)

    bound_slack = bound_M - d1
    inner = g2((pm[:, None] * s[None, :]).ravel()).reshape(t.size, s.size)
    outer = g1((d1[:, None] * inner).ravel()).reshape(t.size, s.size)
    margins = s[None, :] - outer
    i, j = np.unravel_index(int(np.argmin(margins)), margins.shape)
    margin = float(margins[i, j])
    ok_bound = bool(np.all(bound_slack >= 0))
    passed = ok_bound and margin >= tol
    witness = None
    if not ok_bound:
        k = int(np.argmin(bound_slack))
        witness = {"condition": "delta1 <= M", "t": float(t[k]), "delta1": float(d1[k]), "M": bound_M}
    elif not passed:
        witness = {"condition": "cycle", "t": float(t[i]), "s": float(s[j]),
                   "lhs": float(outer[i, j]), "margin": margin}
    return CertificateReport(
        check=f"cycle_condition[{direction}]",
        passed=passed,
        margin=margin,
        witness=witness,
        resolution={"s_points": int(s.size), "t_points": int(t.size), "tol": tol},
        parameters={"bound_M": bound_M, "g1": g1.name, "g2": g2.name},
        details={"bound_slack": float(bound_slack.min())},
    )


def linear_gain_condition(K1: float, K2: float, delta1: ComparisonFn, delta2: ComparisonFn,
                          t_grid: Sequence[float] | None = None, tol: float = DEFAULT_TOL) -> CertificateReport:
    """K1 K2 sup_t delta1(t) max_{[0,t]} delta2 < 1 for linear gains."""
    if K1 < 0 or K2 < 0:
        raise ConfigurationError("K1, K2 must be non-negative")
    t = _grid(DEFAULT_T_GRID if t_grid is None else t_grid, "t_grid")
    t, pm = _prefix_max(delta2, t)
    prod = _values(delta1, t) * pm
    k = int(np.argmax(prod))
    sup = float(prod[k])
    value = K1 * K2 * sup
    margin = 1.0 - value
    passed = margin >= tol
    return CertificateReport(
        check="linear_gain_condition",
        passed=passed,
        margin=margin,
        witness=None if passed else {"t": float(t[k]), "product": value},
        resolution={"t_points": int(t.size), "tol": tol},
        parameters={"K1": K1, "K2": K2},
        details={"sup": sup, "gain_product": value},
    )
