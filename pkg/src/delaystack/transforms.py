"""Builders that rewrite neutral delay equations and transport PDEs in coupled form."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, HypothesisViolation
from .history import BoundedHistory, ContinuousHistory, _simpson, time_tol
from .report import CertificateReport
from .solver import CoupledSystem, Trajectory, solve_coupled


@dataclass
class NeutralSpec:
    """A neutral equation.

    Difference-operator form (``form="hale"``)::

        d/dt (x(t) - g(t, x_view)) = f(t, d, x_view, u)

    where ``g`` may only read offsets ``<= -tau(t)``.

    Derivative-feedback form (``form="bellman"``)::

        x'(t) = f(t, d, x_view, xdot_view, u)

    where ``xdot_view`` may only be read at offsets ``<= -tau(t)``.
    """

    form: str
    n: int
    r: float
    tau: Callable[[float], float] | float
    f: Callable
    g: Callable | None = None
    m: int = 0
    d_dim: int = 0
    d_bounds: tuple | None = None
    name: str = ""

    def tau_at(self, t: float) -> float:
        return float(self.tau(t)) if callable(self.tau) else float(self.tau)


class ReconstructedView:
    """History view of x built from the coupled channels.

    For offsets at or before ``-tau(t)`` it returns x2; inside the last
    ``tau(t)`` it rebuilds x1 + g evaluated at the shifted time.
    """

    __slots__ = ("x1", "x2", "g", "t", "tau_t", "tau", "r")

    def __init__(self, x1, x2, g, t, tau, r):
        self.x1, self.x2, self.g, self.t, self.tau, self.r = x1, x2, g, t, tau, r
        self.tau_t = tau(t) if callable(tau) else float(tau)

    def __call__(self, theta: float = 0.0) -> np.ndarray:
        if theta <= -self.tau_t:
            return self.x2(theta)
        shifted = _ShiftedView(self.x2, theta)
        return self.x1(theta) + np.asarray(self.g(self.t + theta, shifted), dtype=float)

    @property
    def now(self) -> np.ndarray:
        return self(0.0)

    def at(self, time: float) -> np.ndarray:
        return self(time - self.t)

    def sup(self, a: float | None = None, b: float = 0.0, samples: int = 64) -> float:
        a = -self.r if a is None else a
        best = 0.0
        if a <= -self.tau_t:
            best = self.x2.sup(a, min(b, -self.tau_t))
        lo = max(a, -self.tau_t)
        if b > lo:
            best = max(best, *(float(np.linalg.norm(self(th))) for th in np.linspace(lo, b, samples + 1)[1:]))
        return best

    def integrate(self, a: float, b: float, fn: Callable | None = None, panels: int = 64) -> np.ndarray:
        panels += panels % 2
        th = np.linspace(a, b, panels + 1)
        vals = np.array([self(x) if fn is None else np.atleast_1d(fn(self(x))) for x in th])
        return _simpson(vals, (b - a) / panels)


class _ShiftedView:
    """A view re-anchored ``offset`` earlier (offset <= 0)."""

    __slots__ = ("base", "offset", "t", "r")

    def __init__(self, base, offset: float):
        self.base = base
        self.offset = offset
        self.t = base.t + offset
        self.r = getattr(base, "r", None)

    def __call__(self, theta: float = 0.0) -> np.ndarray:
        return self.base(self.offset + theta)

    def at(self, time: float) -> np.ndarray:
        return self(time - self.t)

    def sup(self, a: float, b: float) -> float:
        return self.base.sup(self.offset + a, self.offset + b)


def _check_non_increasing(tau, grid: Sequence[float]) -> None:
    if not callable(tau):
        return
    vals = np.array([float(tau(t)) for t in grid])
    bad = np.nonzero(np.diff(vals) > 1e-12 * (1 + np.abs(vals[:-1])))[0]
    if bad.size:
        k = int(bad[0])
        raise HypothesisViolation(
            f"tau must be non-increasing: tau({grid[k]!r})={vals[k]!r} < tau({grid[k + 1]!r})={vals[k + 1]!r}")


def hale_to_coupled(spec: NeutralSpec, grid: Sequence[float] | None = None) -> CoupledSystem:
    """x1 = x - g(...), x2 = x; windows r and 2r."""
    if spec.form != "hale" or spec.g is None:
        raise ConfigurationError("hale_to_coupled needs form='hale' and a difference operator g")
    _check_non_increasing(spec.tau, np.linspace(0.0, 10.0, 1001) if grid is None else grid)
    f, g, tau, R = spec.f, spec.g, spec.tau, spec.r

    def f1(t, d, x1, x2, u):
        return f(t, d, ReconstructedView(x1, x2, g, t, tau, R), u)

    def f2(t, d, x1, x2, u):
        return x1(0.0) + np.asarray(g(t, x2), dtype=float)
    return CoupledSystem(spec.n, spec.n, R, 2 * R, tau, f1, f2, m=spec.m, d_dim=spec.d_dim,
                         d_bounds=spec.d_bounds, name=f"hale:{spec.name}")


def bellman_to_coupled(spec: NeutralSpec) -> CoupledSystem:
    """Both channels use f: x1 follows x, x2 follows its derivative; windows r."""
    if spec.form != "bellman":
        raise ConfigurationError("bellman_to_coupled needs form='bellman'")
    f = spec.f

    def rhs(t, d, x1, x2, u):
        return f(t, d, x1, x2, u)
    return CoupledSystem(spec.n, spec.n, spec.r, spec.r, spec.tau, rhs, rhs, m=spec.m, d_dim=spec.d_dim,
                         d_bounds=spec.d_bounds, name=f"bellman:{spec.name}")


# ---------------------------------------------------------------- matching conditions

def _as_offset_fn(h) -> Callable[[float], np.ndarray]:
    if isinstance(h, (ContinuousHistory, BoundedHistory)):
        cur = h.current_time
        return lambda th: h.sample(cur + th)
    if callable(h):
        return lambda th: np.atleast_1d(np.asarray(h(th), dtype=float))
    c = np.atleast_1d(np.asarray(h, dtype=float))
    return lambda th: c


class _FnView:
    __slots__ = ("fn", "t", "r")

    def __init__(self, fn, t, r):
        self.fn, self.t, self.r = fn, t, r

    def __call__(self, theta: float = 0.0):
        return self.fn(theta)

    def sup(self, a, b, samples: int = 256):
        return max(float(np.linalg.norm(self.fn(th))) for th in np.linspace(a, b, samples + 1))


def check_matching(kind: str, x10, x20, spec: NeutralSpec | None = None, r: float | None = None,
                   t0: float = 0.0, samples: int = 201, tol: float | None = None,
                   deriv: Callable | None = None, fd_step: float = 1e-5) -> CertificateReport:
    """Residual of the compatibility condition between the two initial histories.

    ``example_1_8``: x1(t0) = x2(t0) - x2(t0 - 2r).
    ``hale``: the rebuilt history equals x2 on [-r, 0].
    ``bellman``: x2 equals the derivative of x1 on [-r, 0] (``deriv`` or central differences).
    """
    f1, f2 = _as_offset_fn(x10), _as_offset_fn(x20)
    if kind == "example_1_8":
        if r is None:
            raise ConfigurationError("example_1_8 matching needs r")
        res = float(np.max(np.abs(f1(0.0) - (f2(0.0) - f2(-2 * r)))))
        witness_theta = 0.0
        tol = 1e-12 if tol is None else tol
    elif kind == "hale":
        if spec is None:
            raise ConfigurationError("hale matching needs the neutral spec")
        view = ReconstructedView(_FnView(f1, t0, spec.r), _FnView(f2, t0, 2 * spec.r), spec.g, t0,
                                 spec.tau, spec.r)
        thetas = np.linspace(-spec.r, 0.0, samples)
        errs = [float(np.max(np.abs(view(th) - f2(th)))) for th in thetas]
        k = int(np.argmax(errs))
        res, witness_theta = errs[k], float(thetas[k])
        tol = 1e-12 if tol is None else tol
    elif kind == "bellman":
        rr = spec.r if spec is not None else r
        if rr is None:
            raise ConfigurationError("bellman matching needs r")
        thetas = np.linspace(-rr, 0.0, samples)

        def xdot(th):
            if deriv is not None:
                return np.atleast_1d(np.asarray(deriv(th), dtype=float))
            h = fd_step
            if th - h < -rr:
                return (-3 * f1(th) + 4 * f1(th + h) - f1(th + 2 * h)) / (2 * h)
            if th + h > 0:
                return (3 * f1(th) - 4 * f1(th - h) + f1(th - 2 * h)) / (2 * h)
            return (f1(th + h) - f1(th - h)) / (2 * h)
        errs = [float(np.max(np.abs(f2(th) - xdot(th)))) for th in thetas]
        k = int(np.argmax(errs))
        res, witness_theta = errs[k], float(thetas[k])
        tol = (1e-12 if deriv is not None else 1e-6) if tol is None else tol
    else:
        raise ConfigurationError(f"unknown matching kind {kind!r}")
    passed = res <= tol
    return CertificateReport(f"matching:{kind}", passed, tol - res,
                             None if passed else {"theta": witness_theta, "residual": res},
                             {"samples": samples if kind != "example_1_8" else 1},
                             {"tolerance": tol}, {"residual": res})


# ---------------------------------------------------------------- transport PDE

@dataclass
class TransportPdeSpec:
    """Scalar transport fields v_i on z in [0, 1]:

        dv_i/dt + a_i dv_i/dz = lam_i v_i
        v_i(t, 0) = boundary(t, d, xi, u, w)_i     with w_i = v_i(t, 1)
        xi'(t)    = ode(t, d, xi, u, w)

    ``v0`` holds the initial profiles ``z -> v_i(t0, z)``.
    """

    a: Sequence[float]
    lam: Sequence[float]
    boundary: Callable
    v0: Sequence[Callable[[float], float]]
    ode: Callable | None = None
    xi0: Sequence[float] = ()
    m: int = 0
    d_dim: int = 0
    boundary_src: Sequence[str] | None = None
    ode_src: Sequence[str] | None = None
    z_samples: int = 1024

    @property
    def p(self) -> int:
        return len(self.a)

    @property
    def k(self) -> int:
        return len(self.xi0)


@dataclass
class PdeReduction:
    system: CoupledSystem
    x10: ContinuousHistory
    x20: BoundedHistory
    warmup: Trajectory | None
    fde_text: str
    x2_spacing: float = 0.0
    meta: dict = field(default_factory=dict)


def pde_to_coupled(spec: TransportPdeSpec, t0: float = 0.0, warmup: bool = True,
                   substep: float | None = None) -> PdeReduction:
    """Coupled form via characteristics: x1 = xi, x2 = boundary values v(t, 0).

    The right-end values are w_i(t) = exp(lam_i / a_i) x2_i(t - 1/a_i).  The
    x2 history before t0 is the initial profile traced back along the
    characteristics, so the coupled form holds from t0 on.
    """
    a = np.asarray(spec.a, dtype=float)
    lam = np.asarray(spec.lam, dtype=float)
    if a.size == 0 or a.size != lam.size or len(spec.v0) != a.size:
        raise ConfigurationError("a, lam and v0 must have one entry per field")
    if np.any(a <= 0):
        raise HypothesisViolation(f"wave speeds must be positive, got {a.tolist()}")
    p = a.size
    delays = 1.0 / a
    gains = np.exp(lam / a)
    tau, r2 = float(delays.min()), float(delays.max())
    k = spec.k
    n1 = max(k, 1)
    boundary, ode = spec.boundary, spec.ode

    def right_end(x2):
        return np.array([gains[i] * x2(-delays[i])[i] for i in range(p)])

    def xi_of(x1):
        return x1(0.0)[:k] if k else np.zeros(0)

    def f1(t, d, x1, x2, u):
        if not k or ode is None:
            return np.zeros(n1)
        return np.asarray(ode(t, d, xi_of(x1), u, right_end(x2)), dtype=float)

    def f2(t, d, x1, x2, u):
        return np.asarray(boundary(t, d, xi_of(x1), u, right_end(x2)), dtype=float)

    sys = CoupledSystem(n1, p, 0.0, r2, tau, f1, f2, m=spec.m, d_dim=spec.d_dim, name="transport",
                        meta={"delays": delays.tolist(), "gains": gains.tolist()})

    def virtual(theta):
        out = np.empty(p)
        for i in range(p):
            z = min(max(-a[i] * theta, 0.0), 1.0)
            th = max(theta, -delays[i])
            out[i] = float(spec.v0[i](z)) * math.exp(lam[i] * th)
        return out
    spacing = float(np.min(delays)) / spec.z_samples
    x20 = BoundedHistory.from_function(virtual, t0, r2, spacing, keep=None)
    x10 = ContinuousHistory.constant(np.asarray(spec.xi0, dtype=float) if k else np.zeros(1), t0, 0.0, keep=None)
    text = _fde_text(spec, delays, gains)
    warm = None
    if warmup:
        warm = solve_coupled(sys, x10, x20, horizon=r2, t0=t0,
                             substep=substep if substep is not None else 2 * spacing)
    return PdeReduction(sys, x10, x20, warm, text, spacing)


def _fde_text(spec: TransportPdeSpec, delays, gains) -> str:
    p = len(delays)
    lines = ["# difference equations obtained along characteristics"]
    for i in range(p):
        lines.append(f"w_{i}(t) = {float(gains[i])!r} * x2_{i}(t - {float(delays[i])!r})")
    for i in range(p):
        src = spec.boundary_src[i] if spec.boundary_src else f"F_{i}(t, d, xi, u, w)"
        lines.append(f"x2_{i}(t) = {src}")
    if spec.k:
        for j in range(spec.k):
            src = spec.ode_src[j] if spec.ode_src else f"g_{j}(t, d, xi, u, w)"
            lines.append(f"xi_{j}'(t) = {src}")
    lines.append(f"# tau = {float(min(delays))!r}, r2 = {float(max(delays))!r}")
    return "\n".join(lines) + "\n"


def characteristic_boundary_value(spec: TransportPdeSpec, t: float, t0: float = 0.0) -> np.ndarray:
    """Exact v(t, 0) for boundary maps that depend on w only, by backward recursion.

    Independent of the coupled solver; used as a reference.
    """
    a = np.asarray(spec.a, dtype=float)
    lam = np.asarray(spec.lam, dtype=float)
    p = a.size

    def v_at_end(i, s):
        if s - t0 < 1.0 / a[i]:
            z = 1.0 - a[i] * (s - t0)
            return float(spec.v0[i](z)) * math.exp(lam[i] * (s - t0))
        return math.exp(lam[i] / a[i]) * float(v_at_start(s - 1.0 / a[i])[i])

    def v_at_start(s):
        if s <= t0 + time_tol(t0):
            return np.array([float(spec.v0[i](0.0)) for i in range(p)])
        w = np.array([v_at_end(i, s) for i in range(p)])
        return np.asarray(spec.boundary(s, np.zeros(spec.d_dim), np.zeros(0), np.zeros(spec.m), w), dtype=float)
    return v_at_start(t)
