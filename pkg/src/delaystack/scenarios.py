"""Built-in systems with their canonical parameters and reference solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .comparison import ComparisonFn, const, identity
from .errors import ConfigurationError
from .solver import CoupledSystem


@dataclass
class BuiltIn:
    """A system plus default initial data, inputs and run settings."""

    system: CoupledSystem
    x10: object = None
    x20: object = None
    d: object = None
    u: object = None
    horizon: float = 1.0
    substeps_per_step: int = 256
    substep: float | None = None
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def neutral_difference(r: float = 0.5) -> CoupledSystem:
    """x1' = x2(t - r),  x2 = x1(t) + x2(t - 2r)."""
    r = float(r)
    if r <= 0:
        raise ConfigurationError("r must be positive")

    def f1(t, d, x1, x2, u):
        return x2(-r)

    def f2(t, d, x1, x2, u):
        return x1(0.0) + x2(-2 * r)
    return CoupledSystem(1, 1, 0.0, 2 * r, r, f1, f2, envelope=(identity(), const(1.0)),
                         name="example_1_8", meta={"r": r})


def neutral_difference_exact(r: float, x10: float = 1.0, x20: float = 0.0, pieces: int = 8):
    """Exact solution for constant data (x1(0) = x10, x2 = x20 on [-2r, 0]) as polynomials per step.

    On step k, t in ((k-1) r, k r] with s = t - (k-1) r:
    x1 = x1((k-1) r) + integral_0^s x2_{k-1} and x2 = x1 + x2_{k-2}.
    Returns ``f(t) -> (x1(t), x2(t))`` valid for 0 <= t <= pieces * r.
    """
    from numpy.polynomial import Polynomial as Poly

    c2 = Poly([float(x20)])
    x2p = {-1: c2, 0: c2}
    x1p = {}
    start = float(x10)
    for k in range(1, pieces + 1):
        x1p[k] = start + x2p[k - 1].integ()
        x2p[k] = x1p[k] + x2p[k - 2]
        start = float(x1p[k](r))

    def value(t: float) -> tuple[float, float]:
        if t < 0 or t > pieces * r * (1 + 1e-12):
            raise ConfigurationError(f"t={t!r} outside [0, {pieces * r!r}]")
        if t == 0:
            return float(x10), float(x20)
        k = max(1, int(math.ceil(t / r - 1e-12)))
        s = t - (k - 1) * r
        return float(x1p[k](s)), float(x2p[k](s))
    return value


def example_4_1(a: float = 1.0, c: float = 3.0, r: float = 0.5, phi: Callable | None = None) -> CoupledSystem:
    """x1' = -a x1 + d phi(t, x2(t - 2r)),  x2 = -a x1 + d phi(t, x2(t - 2r)),  d in [-1, 1].

    Default ``phi(t, x) = x cos(t) / c`` satisfies |phi| <= |x| / c.
    """
    if c <= 0 or a <= 0 or r <= 0:
        raise ConfigurationError("need a, c, r > 0")
    phi = (lambda t, x: x * math.cos(t) / c) if phi is None else phi
    r2 = 2 * r

    def f1_sub(t, d, x1, v1, u):
        return -a * x1(0.0) + d * phi(t, np.atleast_1d(v1))

    def f2_sub(t, d, v2, x2, u):
        return -a * np.atleast_1d(v2) + d * phi(t, x2(-r2))

    return CoupledSystem.interconnection(
        1, 1, r2, r2, r, f1_sub, f2_sub,
        H1=lambda t, x1: x1(0.0), H2=lambda t, x2: x2(-r2),
        H=lambda t, x1, x2: np.concatenate((x1(0.0), x2(-r2))),
        d_dim=1, d_bounds=(-1.0, 1.0), name="example_4_1",
        meta={"a": a, "c": c, "r": r, "v1_dim": 1, "v2_dim": 1})


def example_4_19_linear(r: float = 1.0, b: float = 0.2):
    """(A, B, C, D, G1, G2) = (-e^t, b, 1, 2, 1, 1) with P = 1, mu = e^t."""
    from .certify.linear_tv import LinearTvSystem
    return LinearTvSystem(A=lambda t: [[-math.exp(t)]], B=float(b), C=1.0, D=2.0, r=float(r), P=1.0,
                          mu_decay=ComparisonFn(np.exp, "K_plus", (0.0, 20.0), "exp(t)"),
                          G1=1.0, G2=1.0, name="example_4_19")


def example_4_19(r: float = 1.0, b: float = 0.2) -> CoupledSystem:
    sys = example_4_19_linear(r, b).to_coupled()
    sys.meta.update({"r": r, "b": b})
    return sys


def feedback_linearized(K: float = 1.0, a: float = 0.5, r: float = 1.0,
                        f: Callable[[np.ndarray], np.ndarray] | None = None) -> CoupledSystem:
    """x' = -K x,  u = -K x - f(x) - a u(t - r) with default f(x) = -x + sin x."""
    f = (lambda x: -x + np.sin(x)) if f is None else f

    def f1(t, d, x1, x2, u):
        return -K * x1(0.0)

    def f2(t, d, x1, x2, u):
        x = x1(0.0)
        return -K * x - f(x) - a * x2(-r)
    return CoupledSystem(1, 1, 0.0, r, r, f1, f2, H=lambda t, x1, x2: x1(0.0), name="ex1_3_feedback",
                         meta={"K": K, "a": a, "r": r})


def riccati() -> CoupledSystem:
    """x1' = x1^2 (finite escape at t = 1 / x1(0))."""
    def f1(t, d, x1, x2, u):
        x = x1(0.0)
        return x * x
    return CoupledSystem(1, 0, 0.0, 0.0, 1.0, f1, None, H=lambda t, x1, x2: x1(0.0), name="riccati")


def _builtin_1_8(p):
    r = float(p.get("r", 0.5))
    return BuiltIn(neutral_difference(r), x10=float(p.get("x1", 1.0)), x20=float(p.get("x2", 0.0)),
                   horizon=float(p.get("horizon", 1.0)), params={"r": r})


def _builtin_4_1(p):
    a, c, r = float(p.get("a", 1.0)), float(p.get("c", 3.0)), float(p.get("r", 0.5))
    return BuiltIn(example_4_1(a, c, r), x10=1.0, x20=1.0, horizon=float(p.get("horizon", 30.0)),
                   substeps_per_step=32, params={"a": a, "c": c, "r": r})


def _builtin_4_19(p):
    r, b = float(p.get("r", 1.0)), float(p.get("b", 0.2))
    return BuiltIn(example_4_19(r, b), x10=1.0, x20=0.0, u=0.0, horizon=float(p.get("horizon", 10.0)),
                   substep=float(p.get("substep", 1.0 / 8192)), params={"r": r, "b": b},
                   extra={"linear_tv": example_4_19_linear(r, b)})


def _builtin_feedback(p):
    K, a, r = float(p.get("K", 1.0)), float(p.get("a", 0.5)), float(p.get("r", 1.0))
    return BuiltIn(feedback_linearized(K, a, r), x10=1.0, x20=0.0, horizon=float(p.get("horizon", 10.0)),
                   params={"K": K, "a": a, "r": r})


def _builtin_riccati(p):
    return BuiltIn(riccati(), x10=float(p.get("x1", 2.0)), horizon=float(p.get("horizon", 1.0)),
                   params={})


BUILTINS: dict[str, Callable[[dict], BuiltIn]] = {
    "example_1_8": _builtin_1_8,
    "example_4_1": _builtin_4_1,
    "example_4_19": _builtin_4_19,
    "ex1_3_feedback": _builtin_feedback,
    "riccati": _builtin_riccati,
}


def builtin(name: str, **params) -> BuiltIn:
    try:
        make = BUILTINS[name]
    except KeyError:
        raise ConfigurationError(f"unknown built-in system {name!r}; known: {sorted(BUILTINS)}") from None
    return make(params)
