"""Sample-based checks of Lyapunov functionals for the two subsystems.

A check passes when no sampled state violates the stated inequalities; each
report carries the number of samples and the step grid used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..comparison import ComparisonFn, class_grid, const, zero
from ..errors import ConfigurationError, ContractViolation, SpecViolation
from ..history import BoundedHistory, _vec
from ..report import CertificateReport
from ..signals import InputSignal
from ..solver import CoupledSystem, FdeSpec, _call, advance_fde, step_bound
from .derivatives import DEFAULT_H_GRID, DEFAULT_TAIL, dini_derivative, generalized_derivative, sigma_at
from .samples import ScenarioSample, mixed_samples


def _one() -> ComparisonFn:
    return const(1.0)


@dataclass
class LyapunovSpecRfde:
    """Functional ``V(t, x1_view)`` with its bounds, thresholds and decay rate."""

    V: Callable
    a2: ComparisonFn
    zeta: ComparisonFn = field(default_factory=zero)
    zeta_u: ComparisonFn = field(default_factory=zero)
    rho: ComparisonFn = field(default_factory=zero)
    beta: ComparisonFn = field(default_factory=_one)
    delta1: ComparisonFn = field(default_factory=_one)
    delta1_u: ComparisonFn = field(default_factory=_one)
    a1: ComparisonFn | None = None
    p: ComparisonFn | None = None
    mu: ComparisonFn | None = None
    R: float = 0.0


@dataclass
class RazumikhinSpec:
    """Pointwise ``V(t, x)`` with the Razumikhin gain ``a`` (strictly below the identity)."""

    V: Callable
    a: ComparisonFn
    a2: ComparisonFn
    zeta: ComparisonFn = field(default_factory=zero)
    zeta_u: ComparisonFn = field(default_factory=zero)
    rho: ComparisonFn = field(default_factory=zero)
    beta: ComparisonFn = field(default_factory=_one)
    delta1: ComparisonFn = field(default_factory=_one)
    delta1_u: ComparisonFn = field(default_factory=_one)


@dataclass
class LyapunovSpecFde:
    """Pointwise ``W(t, x2)`` for the difference-equation channel.

    ``V(t, x2) = sup_theta exp(mu_exp theta) W(t + theta, x2(theta))`` is the
    induced functional; ``lam * exp(mu_exp * r2) <= 1`` is required.
    """

    W: Callable
    lam: float
    mu_exp: float
    r2: float
    zeta: ComparisonFn = field(default_factory=zero)
    zeta_u: ComparisonFn = field(default_factory=zero)
    delta2: ComparisonFn = field(default_factory=_one)
    delta2_u: ComparisonFn = field(default_factory=_one)
    a1_tilde: ComparisonFn | None = None
    a2_tilde: ComparisonFn | None = None
    beta_tilde: ComparisonFn = field(default_factory=_one)
    p: ComparisonFn | None = None
    mu_w: ComparisonFn | None = None
    R: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lam < 1.0:
            raise ConfigurationError(f"lam must lie in [0, 1), got {self.lam!r}")
        if self.mu_exp < 0:
            raise ConfigurationError("mu_exp must be non-negative")
        if self.lam * math.exp(self.mu_exp * self.r2) > 1.0 + 1e-12:
            raise ConfigurationError("need lam * exp(mu_exp * r2) <= 1")


def _tol(x: float) -> float:
    return 1e-6 * (1.0 + abs(x))


class _Worst:
    """Tracks the smallest slack per named condition and the first violation."""

    def __init__(self):
        self.margins: dict[str, float] = {}
        self.witness: dict | None = None
        self.counts: dict[str, int] = {}

    def add(self, name: str, slack: float, tol: float, info: dict) -> None:
        """``slack`` >= -``tol`` is accepted; margins record ``slack + tol`` so that pass means margin >= 0."""
        self.counts[name] = self.counts.get(name, 0) + 1
        if slack + tol < self.margins.get(name, math.inf):
            self.margins[name] = slack + tol
        if slack < -tol and self.witness is None:
            self.witness = {"condition": name, "slack": slack, **info}

    def report(self, check: str, resolution: dict, parameters: dict, details: dict | None = None) -> CertificateReport:
        margin = min(self.margins.values(), default=math.inf)
        return CertificateReport(check, self.witness is None, margin, self.witness, resolution, parameters,
                                 {"margins": dict(self.margins), "checked": dict(self.counts), **(details or {})})


def _samples(sys, samples, n_samples, seed):
    return list(samples) if samples is not None else mixed_samples(sys, n_samples, seed)


def _norm(x) -> float:
    return float(np.linalg.norm(np.atleast_1d(x)))


def rfde_direction(sys: CoupledSystem, smp: ScenarioSample):
    """Right-hand side of the x1 subsystem at a sample, driven by ``smp.v1``."""
    x1v = smp.x1_view(sys.r1)
    if sys.f1_sub is not None:
        return _call(sys.f1_sub, "f1", smp.t, smp.d, x1v, smp.v1, smp.u)
    if sys.n2 == 0:
        return _call(sys.f1, "f1", smp.t, smp.d, x1v, None, smp.u)
    raise ConfigurationError("the x1 subsystem needs f1_sub (build the system with interconnection)")


def check_lyapunov_rfde(spec: LyapunovSpecRfde, sys: CoupledSystem, samples: Sequence[ScenarioSample] | None = None,
                        n_samples: int = 1000, seed: int = 0, h_grid: Sequence[float] = DEFAULT_H_GRID,
                        tail: int | None = DEFAULT_TAIL, slack: Callable[[float], float] = _tol) -> CertificateReport:
    """Decay of ``V`` along the x1 subsystem wherever the input threshold lies below ``V``."""
    samples = _samples(sys, samples, n_samples, seed)
    w = _Worst()
    active = 0
    for k, smp in enumerate(samples):
        t = smp.t
        x1v = smp.x1_view(sys.r1)
        V = float(spec.V(t, x1v))
        info = {"sample": k, "t": t, "source": smp.source, "V": V}
        nx = x1v.sup() if sys.r1 else _norm(x1v(0.0))
        w.add("upper bound", float(spec.a2(spec.beta(t) * nx)) - V, _tol(V), info)
        if spec.a1 is not None and sys.H1 is not None:
            w.add("output bound", V - float(spec.a1(_norm(sys.H1(t, x1v)))), _tol(V), info)
        if spec.p is not None and spec.mu is not None:
            w.add("coercivity", V + spec.R - float(spec.p(spec.mu(t) * _norm(x1v(0.0)))), _tol(V), info)
        thr = max(float(spec.zeta(spec.delta1(t) * _norm(smp.v1))),
                  float(spec.zeta_u(spec.delta1_u(t) * _norm(smp.u))))
        if thr > V:
            continue
        active += 1
        f = rfde_direction(sys, smp)
        D = generalized_derivative(spec.V, t, x1v, f, h_grid, tail, sys.r1)
        w.add("decay", -float(spec.rho(V)) - D, slack(D), dict(info, derivative=D, threshold=thr))
    return w.report("lyapunov_rfde", {"samples": len(samples), "active": active, "h_grid": list(h_grid),
                                      "tail": tail}, {"n_samples": len(samples), "seed": seed})


def check_razumikhin(spec: RazumikhinSpec, sys: CoupledSystem, samples: Sequence[ScenarioSample] | None = None,
                     n_samples: int = 1000, seed: int = 0, h_grid: Sequence[float] = DEFAULT_H_GRID,
                     tail: int | None = DEFAULT_TAIL, window_points: int = 129,
                     slack: Callable[[float], float] = _tol) -> CertificateReport:
    """Pointwise decay of ``V`` wherever it dominates inputs and ``a`` of its own recent past."""
    s = class_grid(spec.a)[1:]
    bad = np.flatnonzero(np.asarray(spec.a(s)) >= s)
    if bad.size:
        raise SpecViolation(f"a(s) < s fails at s={float(s[bad[0]])!r}")
    samples = _samples(sys, samples, n_samples, seed)
    w = _Worst()
    active = 0
    thetas = np.linspace(-sys.r1, 0.0, window_points) if sys.r1 else np.array([0.0])
    for k, smp in enumerate(samples):
        t = smp.t
        x1v = smp.x1_view(sys.r1)
        x0 = x1v(0.0)
        V = float(spec.V(t, x0))
        past = max(float(spec.V(t + th, x1v(th))) for th in thetas)
        if past > 0 and float(spec.a(past)) >= past:
            raise SpecViolation(f"a(s) < s fails at s={past!r}")
        info = {"sample": k, "t": t, "source": smp.source, "V": V, "window_sup": past}
        w.add("upper bound", float(spec.a2(spec.beta(t) * _norm(x0))) - float(spec.V(t - sys.r1, x0)),
              _tol(V), info)
        thr = max(float(spec.zeta(spec.delta1(t) * _norm(smp.v1))),
                  float(spec.zeta_u(spec.delta1_u(t) * _norm(smp.u))),
                  float(spec.a(past)))
        if thr > V:
            continue
        active += 1
        f = rfde_direction(sys, smp)
        D = dini_derivative(spec.V, t, x0, f, h_grid, tail)
        w.add("decay", -float(spec.rho(V)) - D, slack(D), dict(info, derivative=D, threshold=thr))
    return w.report("razumikhin", {"samples": len(samples), "active": active, "h_grid": list(h_grid),
                                   "window_points": window_points}, {"n_samples": len(samples), "seed": seed})


# ---------------------------------------------------------------- difference-equation channel

def _weighted_points(hist: BoundedHistory, ta: float, tb: float):
    """Stored samples of ``hist`` on [ta, tb] plus both endpoints (jump entries included)."""
    T, X = hist.times, hist.values
    tol = 1e-12 * (1 + abs(tb))
    mask = (T >= ta - tol) & (T <= tb + tol)
    pts = [(float(t), x) for t, x in zip(T[mask], X[mask])]
    for e in (ta, tb):
        pts.append((e, hist.sample(e)))
        pts.append((e, hist.sample(e, right=True)))
    return pts


def build_fde_functional(spec: LyapunovSpecFde) -> Callable:
    """``V(t, x2)``: the largest ``exp(mu theta) W(t + theta, x2(theta))`` over stored samples of the window.

    ``x2`` is a ``BoundedHistory`` ending at ``t`` or a view of one.
    """
    mu, r2, W = spec.mu_exp, spec.r2, spec.W

    def V(t: float, x2) -> float:
        hist = getattr(x2, "hist", x2)
        return max(math.exp(mu * (s - t)) * float(W(s, x)) for s, x in _weighted_points(hist, t - r2, t))
    return V


def _fde_parts(sys):
    """(update map with v2 argument, tau, r2, H2)."""
    if isinstance(sys, FdeSpec):
        f = sys.f
        return (lambda t, d, v2, x2, u: f(t, d, x2, u)), sys.tau, sys.r, None
    if sys.f2_sub is not None:
        return sys.f2_sub, sys.tau, sys.r2, sys.H2
    if sys.n1 == 0:
        f = sys.f2
        return (lambda t, d, v2, x2, u: f(t, d, None, x2, u)), sys.tau, sys.r2, sys.H2
    raise ConfigurationError("the x2 subsystem needs f2_sub (build the system with interconnection)")


def _tau(tau, t: float) -> float:
    return float(tau(t)) if callable(tau) else float(tau)


def check_lyapunov_fde(spec: LyapunovSpecFde, sys, samples: Sequence[ScenarioSample] | None = None,
                       h_grid: Sequence[float] | None = None, n_samples: int = 1000, seed: int = 0,
                       decay_samples: int | None = 100, tol: float = 1e-9) -> CertificateReport:
    """Contraction of ``W`` under the update map and decay of the induced functional.

    Decay is checked on the first ``decay_samples`` samples (all when None)
    for each step in ``h_grid`` (default: half and the full explicit bound),
    using constant inputs over the step.
    """
    f2, tau, r2, H2 = _fde_parts(sys)
    samples = _samples(sys, samples, n_samples, seed)
    V = build_fde_functional(spec)
    mu = spec.mu_exp
    rho = ComparisonFn(lambda s: mu * s, "K_inf" if mu > 0 else "N", name=f"{mu}*s")
    w = _Worst()
    W = spec.W
    for k, smp in enumerate(samples):
        t = smp.t
        hist = smp.x2
        tt = _tau(tau, t)
        known = t - tt
        view = hist.view(t, known, r=r2)
        info = {"sample": k, "t": t, "source": smp.source}
        # contraction of W
        new = _call(f2, "f2", t, smp.d, smp.v2, view, smp.u)
        lhs = float(W(t, new))
        past = max(float(W(s, x)) for s, x in _weighted_points(hist, t - r2, known))
        rhs = max(spec.lam * past, float(spec.zeta(spec.delta2(t) * _norm(smp.v2))),
                  float(spec.zeta_u(spec.delta2_u(t) * _norm(smp.u))))
        w.add("contraction", rhs - lhs, tol * (1 + abs(lhs)), dict(info, W_new=lhs, bound=rhs))
        # sandwich bounds on stored points
        for s, x in _weighted_points(hist, t - r2, t):
            if spec.a2_tilde is not None:
                w.add("upper bound", float(spec.a2_tilde(spec.beta_tilde(s + r2) * _norm(x))) - float(W(s, x)),
                      tol, dict(info, time=s))
            if spec.p is not None and spec.mu_w is not None:
                w.add("coercivity", float(W(s, x)) + spec.R - float(spec.p(spec.mu_w(s) * _norm(x))),
                      tol, dict(info, time=s))
        if spec.a1_tilde is not None and H2 is not None:
            sup_w = max(float(W(s, x)) for s, x in _weighted_points(hist, t - r2, t))
            w.add("output bound", sup_w - float(spec.a1_tilde(_norm(H2(t, view)))), tol, info)
        # functional decay over one step
        if decay_samples is not None and k >= decay_samples:
            continue
        g = min(1.0, step_bound(tau, t)) if callable(tau) else min(1.0, float(tau))
        steps = (0.5 * g, g) if h_grid is None else tuple(h_grid)
        for h in steps:
            if h > g + 1e-12 * (1 + g):
                raise ContractViolation(f"step {h!r} exceeds the explicit bound {g!r} at t={t!r}")
            V0 = V(t, hist)
            nxt = hist.truncated(t, window=None)
            shim = FdeSpec(hist.dim, r2, tau, lambda s, d_, x2v, u_, v=smp.v2: f2(s, d_, v, x2v, u_),
                           m=smp.u.size, d_dim=smp.d.size)
            seg = advance_fde(shim, nxt, t, h, d=InputSignal.constant(smp.d) if smp.d.size else None,
                              u=InputSignal.constant(smp.u) if smp.u.size else None, samples=64)
            nxt.shift_append(seg)
            V1 = V(t + h, nxt)
            ts = np.linspace(t, t + h, 9)
            drive = max(max(float(spec.zeta(spec.delta2(s) * _norm(smp.v2))),
                            float(spec.zeta_u(spec.delta2_u(s) * _norm(smp.u)))) for s in ts)
            bound = max(sigma_at(rho, V0, h), drive)
            w.add("decay", bound - V1, tol * (1 + abs(V1)), dict(info, h=h, V_before=V0, V_after=V1, bound=bound))
    return w.report("lyapunov_fde", {"samples": len(samples), "decay_samples": decay_samples,
                                     "h_grid": None if h_grid is None else list(h_grid)},
                    {"lam": spec.lam, "mu_exp": spec.mu_exp, "seed": seed})
