"""Method-of-steps solver for coupled delay differential / difference equations.

The system is

    x1'(t) = f1(t, d(t), x1-history, x2-history, u(t))
    x2(t)  = f2(t, d(t), x1-history, x2-history, u(t))

where both right-hand sides read x2 only at times ``<= t - tau(t)``.  Time is
cut into steps no longer than the smallest delay ahead, so on each step the
x2 data they need is already known.  Within a step x1 is advanced by fixed
substep RK4 with cubic Hermite dense output, then x2 is evaluated pointwise
on a grid of half substeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .comparison import ComparisonFn
from .errors import (ConfigurationError, ContractViolation, DelayStackError, EvaluationError,
                     ExplicitnessError, HypothesisViolation)
from .history import (BoundedHistory, BoundedSegment, BoundedView, ContinuousHistory, ContinuousView,
                      time_tol)
from .report import CertificateReport
from .signals import InputSignal, Xoshiro256, as_signal, random_continuous_samples

MIN_STEP = 1e-6


# ---------------------------------------------------------------- systems

@dataclass
class CoupledSystem:
    """Callbacks receive ``(t, d, x1_view, x2_view, u)``; outputs ``(t, x1_view, x2_view)``.

    ``f1_sub``/``f2_sub``/``H1``/``H2`` are present when the system was built
    as an interconnection; they enable the open-loop subsystem solvers.
    """

    n1: int
    n2: int
    r1: float
    r2: float
    tau: Callable[[float], float] | float
    f1: Callable
    f2: Callable
    H: Callable | None = None
    H1: Callable | None = None
    H2: Callable | None = None
    f1_sub: Callable | None = None
    f2_sub: Callable | None = None
    m: int = 0
    d_dim: int = 0
    d_bounds: tuple | None = None
    envelope: tuple[ComparisonFn, ComparisonFn] | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def tau_at(self, t: float) -> float:
        return float(self.tau(t)) if callable(self.tau) else float(self.tau)

    @property
    def tau_constant(self) -> float | None:
        return None if callable(self.tau) else float(self.tau)

    @classmethod
    def interconnection(cls, n1, n2, r1, r2, tau, f1_sub, f2_sub, H1, H2, H=None, **kw) -> "CoupledSystem":
        """Feedback loop: x1 is driven by ``H2(t, x2_view)``, x2 by ``H1(t, x1_view)``."""

        def f1(t, d, x1, x2, u):
            return f1_sub(t, d, x1, H2(t, x2), u)

        def f2(t, d, x1, x2, u):
            return f2_sub(t, d, H1(t, x1), x2, u)
        return cls(n1, n2, r1, r2, tau, f1, f2, H=H, H1=H1, H2=H2, f1_sub=f1_sub, f2_sub=f2_sub, **kw)


@dataclass
class FdeSpec:
    """A pure difference equation ``x(t) = f(t, d, x_view, u)`` with delay bound ``tau`` and horizon ``r``."""

    n: int
    r: float
    tau: Callable[[float], float] | float
    f: Callable
    m: int = 0
    d_dim: int = 0
    name: str = ""


@dataclass
class Trajectory:
    system: CoupledSystem
    t0: float
    t_end: float
    x1: ContinuousHistory
    x2: BoundedHistory
    breakpoints: list[float]
    status: str = "completed"
    blowup: tuple[float, float] | None = None
    d: InputSignal | None = None
    u: InputSignal | None = None
    explicitness_slack: float = -math.inf
    output: Callable | None = None
    _table: tuple | None = field(default=None, repr=False)

    @property
    def jump_points(self) -> list[float]:
        return [t for t in self.x2.jump_points if t >= self.t0 - time_tol(self.t0)]

    def x1_at(self, t: float) -> np.ndarray:
        return self.x1.sample(t) if self.system.n1 else np.zeros(0)

    def x2_at(self, t: float, right: bool = False) -> np.ndarray:
        return self.x2.sample(t, right=right) if self.system.n2 else np.zeros(0)

    def grid(self) -> np.ndarray:
        """Substep node times from t0 to the final time."""
        if self.system.n1 == 0:
            T = self.x2.times
        else:
            T = self.x1.times
        T = T[T >= self.t0 - time_tol(self.t0)]
        return np.unique(T)

    def table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(times, x1 rows, x2 rows, output rows) on the substep grid."""
        if self._table is None:
            T = self.grid()
            n1, n2 = self.system.n1, self.system.n2
            X1 = np.array([self.x1.sample(t) for t in T]) if n1 else np.zeros((T.size, 0))
            X2 = np.array([self.x2.sample(t) for t in T]) if n2 else np.zeros((T.size, 0))
            out = self.output
            if out is not None:
                Y = np.array([np.atleast_1d(np.asarray(out(t, self.x1.view(t, self.system.r1),
                                                           self.x2.view(t, t, r=self.system.r2)), dtype=float))
                              for t in T])
            else:
                Y = np.zeros((T.size, 0))
            self._table = (T, X1, X2, Y)
        return self._table

    def to_csv(self) -> str:
        T, X1, X2, Y = self.table()
        head = ["t"] + [f"x1_{j}" for j in range(X1.shape[1])] + [f"x2_{j}" for j in range(X2.shape[1])] \
            + [f"Y_{j}" for j in range(Y.shape[1])]
        lines = [",".join(head)]
        for k in range(T.size):
            row = [T[k], *X1[k], *X2[k], *Y[k]]
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    def jumps_text(self) -> str:
        return "".join(f"{t!r}\n" for t in self.jump_points)

    def restart_data(self, t1: float) -> tuple[ContinuousHistory, BoundedHistory]:
        """Histories at time ``t1`` for restarting the solve there."""
        x1 = self.x1.truncated(t1, window=None) if self.system.n1 else ContinuousHistory(t1, np.zeros(0), window=None)
        x2 = self.x2.truncated(t1, window=None) if self.system.n2 else BoundedHistory([t1], [np.zeros(0)], window=None)
        return x1, x2


# ---------------------------------------------------------------- step schedule

def _min_on(tau: Callable[[float], float], a: float, b: float, samples: int) -> float:
    ts = np.linspace(a, b, samples + 1)
    vals = np.array([float(tau(t)) for t in ts])
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        k = int(np.argmax(~np.isfinite(vals) | (vals <= 0)))
        raise HypothesisViolation(f"delay bound tau must be positive: tau({ts[k]!r}) = {vals[k]!r}")
    k = int(np.argmin(vals))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, samples)]
    best = vals[k]
    # ternary refinement around the grid minimiser
    while hi - lo > 1e-9:
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        f1, f2 = float(tau(m1)), float(tau(m2))
        if f1 <= 0 or f2 <= 0:
            raise HypothesisViolation(f"delay bound tau must be positive near t={m1!r}")
        if f1 < f2:
            hi = m2
        else:
            lo = m1
        best = min(best, f1, f2)
    return float(min(best, float(tau(lo)), float(tau(hi))))


def step_bound(tau, t: float, samples: int = 1024) -> float:
    """min(1, min of tau over [t, t + 1])."""
    if not callable(tau):
        if tau <= 0:
            raise HypothesisViolation(f"delay bound tau must be positive, got {tau!r}")
        return min(1.0, float(tau))
    return min(1.0, _min_on(tau, t, t + 1.0, samples))


def step_schedule(tau, t0: float, horizon: float, samples: int = 1024) -> list[float]:
    """Breakpoints t0 = T0 < T1 < ... with T_{i+1} = T_i + min(1, min tau on [T_i, T_i + 1]).

    The last breakpoint is clipped to ``t0 + horizon``.
    """
    if horizon < 0:
        raise ConfigurationError("horizon must be >= 0")
    end = t0 + horizon
    out = [float(t0)]
    if not callable(tau):
        h = step_bound(tau, t0)
        n = int(math.ceil(horizon / h - 1e-9))
        out = [t0 + k * h for k in range(n)] + [float(end)]
        return out if horizon > 0 else [float(t0)]
    while out[-1] < end - time_tol(end):
        h = step_bound(tau, out[-1], samples)
        if h < MIN_STEP:
            raise HypothesisViolation(f"step length {h!r} below floor {MIN_STEP} at t={out[-1]!r}")
        nxt = out[-1] + h
        out.append(end if nxt >= end - time_tol(end) else nxt)
    return out


# ---------------------------------------------------------------- initial data

def _substeps(step: float, substep: float | None, per_step: int) -> int:
    if substep is None:
        return per_step
    if substep <= 0:
        raise ConfigurationError("substep must be positive")
    return max(1, int(round(step / substep)))


def _initial_x1(x10, sys: CoupledSystem, t0: float, dt: float) -> ContinuousHistory:
    if isinstance(x10, ContinuousHistory):
        hist = x10.truncated(window=None)
        if abs(hist.current_time - t0) > time_tol(t0):
            raise ContractViolation(f"x1 history ends at {hist.current_time!r}, expected {t0!r}")
        return hist
    if sys.n1 == 0:
        return ContinuousHistory(t0, np.zeros(0), window=None)
    if callable(x10):
        return ContinuousHistory.from_function(x10, t0, sys.r1, spacing=dt, keep=None)
    return ContinuousHistory.constant(np.zeros(sys.n1) if x10 is None else np.broadcast_to(
        np.asarray(x10, dtype=float), (sys.n1,)), t0, sys.r1, keep=None)


def _initial_x2(x20, n2: int, r2: float, t0: float, ds: float) -> BoundedHistory:
    if isinstance(x20, BoundedHistory):
        hist = x20.truncated(window=None)
        if abs(hist.current_time - t0) > time_tol(t0):
            raise ContractViolation(f"x2 history ends at {hist.current_time!r}, expected {t0!r}")
        return hist
    if n2 == 0:
        return BoundedHistory([t0], [np.zeros(0)], window=None)
    if isinstance(x20, (list, tuple)) and x20 and isinstance(x20[0], tuple):
        return BoundedHistory.from_pieces(x20, t0, ds, keep=None)
    if callable(x20):
        return BoundedHistory.from_function(x20, t0, r2, ds, keep=None)
    c = np.zeros(n2) if x20 is None else np.broadcast_to(np.asarray(x20, dtype=float), (n2,))
    return BoundedHistory.constant(c, t0, r2, keep=None)


# ---------------------------------------------------------------- core integration

def _call(fn, what: str, t: float, *args) -> np.ndarray:
    try:
        out = np.atleast_1d(np.asarray(fn(t, *args), dtype=float)).ravel()
    except DelayStackError:
        raise
    except Exception as exc:  # user callbacks may raise anything
        raise EvaluationError(f"{what} failed: {exc}", t) from exc
    if not math.isfinite(float(out.sum())) and not np.isfinite(out).all():
        raise EvaluationError(f"{what} returned a non-finite value {out.tolist()}", t)
    return out


class _Run:
    """State of one solve; also used for subsystem routes."""

    def __init__(self, sys: CoupledSystem, x1: ContinuousHistory, x2: BoundedHistory,
                 d: InputSignal, u: InputSignal, f1, f2, check_explicitness: bool):
        self.sys = sys
        self.x1 = x1
        self.x2 = x2
        self.d = d
        self.u = u
        self.f1 = f1
        self.f2 = f2
        self.check = check_explicitness
        self.slack = -math.inf

    def _explicit(self, t: float, t_known: float) -> None:
        if not self.check:
            return
        s = t - self.sys.tau_at(t) - t_known
        self.slack = max(self.slack, s)
        if s > time_tol(t):
            raise ExplicitnessError(f"t - tau(t) = {t - self.sys.tau_at(t)!r} exceeds step start {t_known!r}")

    def rhs1(self, t: float, x1view, known: float, right: bool = False) -> np.ndarray:
        self._explicit(t, known)
        x2v = BoundedView(self.x2, t, known, right, self.sys.r2)
        return _call(self.f1, "f1", t, self.d(t), x1view, x2v, self.u(t))

    def rhs2(self, t: float, known: float, right: bool = False) -> np.ndarray:
        self._explicit(t, known)
        x1v = ContinuousView(self.x1, t, self.sys.r1)
        x2v = BoundedView(self.x2, t, known, right, self.sys.r2)
        return _call(self.f2, "f2", t, self.d(t), x1v, x2v, self.u(t))

    def advance_x1(self, Ta: float, Tb: float, N: int, blowup_norm: float) -> tuple[float, float] | None:
        """RK4 over (Ta, Tb] in N substeps; returns (t, norm) on blow-up."""
        sys = self.sys
        hist = self.x1
        if sys.n1 == 0:
            hist.append_node(Tb, np.zeros(0), np.zeros(0))
            return None
        dt = (Tb - Ta) / N
        r1 = sys.r1
        k1 = self.rhs1(Ta, ContinuousView(hist, Ta, r1), Ta, right=True)
        hist.set_right_derivative(k1)
        for n in range(N):
            tn = Ta + n * dt
            t_half = tn + 0.5 * dt
            t_next = Tb if n == N - 1 else Ta + (n + 1) * dt
            h = t_next - tn
            xn = hist.current_value
            xs = xn + 0.5 * h * k1
            k2 = self.rhs1(t_half, ContinuousView(hist, t_half, r1, (tn, xn, xs)), Ta)
            xs = xn + 0.5 * h * k2
            k3 = self.rhs1(t_half, ContinuousView(hist, t_half, r1, (tn, xn, xs)), Ta)
            xs = xn + h * k3
            k4 = self.rhs1(t_next, ContinuousView(hist, t_next, r1, (tn, xn, xs)), Ta)
            x_next = xn + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            norm = float(np.linalg.norm(x_next))
            if not np.all(np.isfinite(x_next)) or norm > blowup_norm:
                return t_next, norm
            hist.append_node(t_next, x_next, np.zeros(sys.n1))
            k1 = self.rhs1(t_next, ContinuousView(hist, t_next, r1), Ta)
            hist.set_node_derivative(k1)
        return None

    def fde_segment(self, Ta: float, Tb: float, samples: int) -> BoundedSegment:
        """x2 on (Ta, Tb] from the update map at ``samples`` equally spaced points."""
        ds = (Tb - Ta) / samples
        start = self.rhs2(Ta, Ta, right=True)
        times = np.array([Tb if j == samples else Ta + j * ds for j in range(1, samples + 1)])
        vals = np.array([self.rhs2(t, Ta) for t in times]) if self.sys.n2 else np.zeros((samples, 0))
        return BoundedSegment(Ta, start, times, vals)


def solve_coupled(sys: CoupledSystem, x10=None, x20=None, d=None, u=None, horizon: float = 1.0,
                  t0: float = 0.0, substep: float | None = None, substeps_per_step: int = 256,
                  blowup_norm: float = 1e12, check_explicitness: bool = False,
                  breakpoints: Sequence[float] | None = None) -> Trajectory:
    """Solve the coupled system on [t0, t0 + horizon] by the method of steps.

    ``x10``/``x20`` may be histories, callables of the offset theta, constants,
    or (for x2) a list of ``(a, b, fn)`` pieces covering (a, b] in offsets.
    ``substep`` (absolute) overrides ``substeps_per_step`` and is rounded so
    that it divides every step.
    """
    sched = list(breakpoints) if breakpoints is not None else step_schedule(sys.tau, t0, horizon)
    _check_tau_bound(sys, sched)
    first = sched[1] - sched[0] if len(sched) > 1 else 1.0
    N0 = _substeps(first, substep, substeps_per_step)
    x1 = _initial_x1(x10, sys, t0, first / N0)
    x2 = _initial_x2(x20, sys.n2, sys.r2, t0, first / (2 * N0))
    d_sig, u_sig = as_signal(d, sys.d_dim), as_signal(u, sys.m)
    run = _Run(sys, x1, x2, d_sig, u_sig, sys.f1, sys.f2, check_explicitness)
    status, blow = "completed", None
    done = [sched[0]]
    for Ta, Tb in zip(sched, sched[1:]):
        N = _substeps(Tb - Ta, substep, substeps_per_step)
        blow = run.advance_x1(Ta, Tb, N, blowup_norm)
        if blow is not None:
            status = "blew_up"
            break
        if sys.n2:
            x2.shift_append(run.fde_segment(Ta, Tb, 2 * N))
        done.append(Tb)
    return Trajectory(sys, t0, done[-1], x1, x2, done, status, blow, d_sig, u_sig, run.slack,
                      output=sys.H)


def _check_tau_bound(sys: CoupledSystem, sched: Sequence[float]) -> None:
    if sys.n2 == 0:
        return
    ts = sched if callable(sys.tau) else sched[:1]
    for t in ts:
        v = sys.tau_at(t)
        if v <= 0 or v > sys.r2 + 1e-12:
            raise HypothesisViolation(f"need 0 < tau(t) <= r2 = {sys.r2!r}; tau({t!r}) = {v!r}")


# ---------------------------------------------------------------- difference-equation channel

def advance_fde(sys, x2_history: BoundedHistory, t: float, h: float, d=None, u=None, v2=None,
                samples: int = 512) -> BoundedSegment:
    """Segment of x2 on (t, t + h] obtained by evaluating the update map.

    ``sys`` is an ``FdeSpec`` or a ``CoupledSystem`` built as an
    interconnection (its x2 subsystem is driven by ``v2``).
    """
    f, n, tau = _fde_map(sys, v2)
    g = step_bound(tau, t)
    if h <= 0 or h > g + time_tol(t):
        raise ContractViolation(f"step {h!r} exceeds the explicit bound {g!r} at t={t!r}")
    shim = CoupledSystem(0, n, 0.0, x2_history.window or 0.0, tau, None, f,
                         m=getattr(sys, "m", 0), d_dim=getattr(sys, "d_dim", 0))
    run = _Run(shim, ContinuousHistory(t, np.zeros(0)), x2_history,
               as_signal(d, shim.d_dim), as_signal(u, shim.m), None, f, False)
    return run.fde_segment(t, t + h, samples)


def _fde_map(sys, v2):
    if isinstance(sys, FdeSpec):
        fn = sys.f
        return (lambda t, d, x1, x2, u: fn(t, d, x2, u)), sys.n, sys.tau
    if sys.f2_sub is None:
        if sys.n1 == 0:
            return sys.f2, sys.n2, sys.tau
        raise ConfigurationError("system has no separate x2 subsystem map (build it with interconnection)")
    v2s = as_signal(v2, sys.n1 if sys.H1 is None else _probe_dim(sys))
    sub = sys.f2_sub
    return (lambda t, d, x1, x2, u: sub(t, d, v2s(t), x2, u)), sys.n2, sys.tau


def _probe_dim(sys: CoupledSystem) -> int:
    return int(sys.meta.get("v2_dim", sys.n1))


def solve_subsystem_fde(sys, x20=None, v2=None, u=None, d=None, horizon: float = 1.0, t0: float = 0.0,
                        substep: float | None = None, substeps_per_step: int = 256) -> Trajectory:
    """Open-loop difference-equation channel driven by ``v2`` (direct route via ``advance_fde``)."""
    f, n, tau = _fde_map(sys, v2)
    r2 = sys.r if isinstance(sys, FdeSpec) else sys.r2
    sched = step_schedule(tau, t0, horizon)
    first = sched[1] - sched[0] if len(sched) > 1 else 1.0
    N0 = _substeps(first, substep, substeps_per_step)
    x2 = _initial_x2(x20, n, r2, t0, first / (2 * N0))
    m = getattr(sys, "m", 0)
    d_dim = getattr(sys, "d_dim", 0)
    H2 = None if isinstance(sys, FdeSpec) else sys.H2
    shim = CoupledSystem(0, n, 0.0, r2, tau, None, f, m=m, d_dim=d_dim,
                         H=None if H2 is None else (lambda t, x1, x2v: H2(t, x2v)))
    for Ta, Tb in zip(sched, sched[1:]):
        N = _substeps(Tb - Ta, substep, substeps_per_step)
        seg = advance_fde(_AsFde(shim), x2, Ta, Tb - Ta, d, u, samples=2 * N)
        x2.shift_append(seg)
    x1 = ContinuousHistory(sched[-1], np.zeros(0))
    return Trajectory(shim, t0, sched[-1], x1, x2, sched, d=as_signal(d, d_dim), u=as_signal(u, m),
                      output=shim.H)


class _AsFde(FdeSpec):
    """Adapter presenting a zero-x1 coupled system as an FdeSpec."""

    def __init__(self, shim: CoupledSystem):
        f2 = shim.f2
        super().__init__(shim.n2, shim.r2, shim.tau, lambda t, d, x2, u: f2(t, d, None, x2, u),
                         shim.m, shim.d_dim)


def solve_subsystem_rfde(sys: CoupledSystem, x10=None, v1=None, u=None, d=None, horizon: float = 1.0,
                         t0: float = 0.0, substep: float | None = None, substeps_per_step: int = 256,
                         blowup_norm: float = 1e12, step: float | None = None) -> Trajectory:
    """Open-loop delay-differential channel driven by ``v1`` in place of the x2 output."""
    if sys.f1_sub is None:
        raise ConfigurationError("system has no separate x1 subsystem map (build it with interconnection)")
    v1s = as_signal(v1, int(sys.meta.get("v1_dim", sys.n2)))
    sub = sys.f1_sub
    H1 = sys.H1
    shim = CoupledSystem(sys.n1, 0, sys.r1, 0.0, step or 1.0, lambda t, d_, x1, x2, u_: sub(t, d_, x1, v1s(t), u_),
                         None, H=None if H1 is None else (lambda t, x1, x2: H1(t, x1)),
                         m=sys.m, d_dim=sys.d_dim)
    return solve_coupled(shim, x10, None, d, u, horizon, t0, substep, substeps_per_step, blowup_norm)


def embed_pure_fde(spec: FdeSpec, xi0: float = 0.0) -> CoupledSystem:
    """Coupled form of a pure difference equation: a scalar x1 with zero derivative rides along."""
    f = spec.f

    def f1(t, d, x1, x2, u):
        return np.zeros(1)

    def f2(t, d, x1, x2, u):
        return f(t, d, x2, u)
    return CoupledSystem(1, spec.n, 0.0, spec.r, spec.tau, f1, f2, m=spec.m, d_dim=spec.d_dim,
                         name=f"embedded:{spec.name}", meta={"xi0": xi0})


# ---------------------------------------------------------------- hypothesis validation

def validate_hypotheses(sys: CoupledSystem, grid: Sequence[float] | None = None, n_samples: int = 200,
                        seed: int = 0, scales: Sequence[float] = (1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3),
                        zero_tol: float = 1e-12) -> CertificateReport:
    """Sample-based check of the delay bound and the growth envelope ``(a, beta)``."""
    grid = np.linspace(0.0, 10.0, 101) if grid is None else np.asarray(grid, dtype=float)
    params = {"n_samples": n_samples, "seed": seed, "scales": list(scales)}
    # delay bound
    for t in grid:
        v = sys.tau_at(float(t))
        if not (0 < v <= sys.r2 + 1e-12) and sys.n2:
            return CertificateReport("hypotheses", False, float(sys.r2 - v),
                                     {"t": float(t), "tau": v, "r2": sys.r2, "condition": "0 < tau <= r2"},
                                     {"t_grid": grid.size}, params)
    gen = Xoshiro256(seed)
    lo, hi = _d_box(sys)
    worst = {"ratio": -math.inf}
    # vanishing at zero
    for t in grid[:: max(1, grid.size // 10)]:
        x1, x2 = _sample_histories(sys, float(t), gen, 0.0)
        dvec = gen.uniform(lo, hi, sys.d_dim) if sys.d_dim else np.zeros(0)
        for name, fn in (("f1", sys.f1), ("f2", sys.f2)):
            if (name == "f1" and not sys.n1) or (name == "f2" and not sys.n2):
                continue
            val = _call(fn, name, float(t), dvec, x1.view(float(t), sys.r1),
                        x2.view(float(t), float(t) - sys.tau_at(float(t)), r=sys.r2), np.zeros(sys.m))
            if np.linalg.norm(val) > zero_tol:
                return CertificateReport("hypotheses", False, -float(np.linalg.norm(val)),
                                         {"t": float(t), "map": name, "value_at_zero": val, "condition": "f(t,d,0,0,0)=0"},
                                         {"t_grid": grid.size}, params)
    if sys.envelope is None:
        return CertificateReport("hypotheses", True, 0.0, None, {"t_grid": grid.size}, params,
                                 {"note": "no growth envelope supplied; only the delay bound and zero checks ran"})
    a_fn, beta = sys.envelope
    for k in range(n_samples):
        t = float(grid[gen.integers(grid.size)])
        scale = float(scales[k % len(scales)])
        x1, x2 = _sample_histories(sys, t, gen, scale)
        uvec = gen.uniform(-scale, scale, sys.m) if sys.m else np.zeros(0)
        dvec = gen.uniform(lo, hi, sys.d_dim) if sys.d_dim else np.zeros(0)
        b = beta(t)
        known = t - sys.tau_at(t)
        n1 = x1.window_sup() if sys.n1 else 0.0
        n2 = x2.sup_between(t - sys.r2, known) if sys.n2 else 0.0
        bound = a_fn(b * n1) + a_fn(b * n2) + a_fn(b * float(np.linalg.norm(uvec)))
        for name, fn in (("f1", sys.f1), ("f2", sys.f2)):
            if (name == "f1" and not sys.n1) or (name == "f2" and not sys.n2):
                continue
            val = float(np.linalg.norm(_call(fn, name, t, dvec, x1.view(t, sys.r1),
                                             x2.view(t, known, r=sys.r2), uvec)))
            ratio = val / bound if bound > 0 else (math.inf if val > 0 else 0.0)
            if ratio > worst["ratio"]:
                worst = {"ratio": ratio, "t": t, "map": name, "scale": scale, "norm_f": val, "envelope": bound}
    passed = worst["ratio"] <= 1.0
    return CertificateReport("hypotheses", passed, 1.0 - worst["ratio"], None if passed else worst,
                             {"samples": n_samples, "t_grid": int(grid.size)}, params,
                             {"worst": worst})


def _d_box(sys: CoupledSystem):
    if sys.d_bounds is None:
        return np.zeros(sys.d_dim), np.zeros(sys.d_dim)
    lo, hi = sys.d_bounds
    return (np.broadcast_to(np.asarray(lo, dtype=float), (sys.d_dim,)),
            np.broadcast_to(np.asarray(hi, dtype=float), (sys.d_dim,)))


def _sample_histories(sys: CoupledSystem, t: float, gen: Xoshiro256, scale: float):
    th1, v1 = random_continuous_samples(gen, sys.n1, sys.r1, scale)
    if th1.size > 1:
        x1 = ContinuousHistory.from_samples(t + th1, v1, window=sys.r1)
    else:
        x1 = ContinuousHistory(t, v1[0], window=0.0)
    th2, v2 = random_continuous_samples(gen, sys.n2, sys.r2, scale)
    x2 = BoundedHistory(t + th2, v2, window=sys.r2) if th2.size > 1 else BoundedHistory([t], v2, window=0.0)
    return x1, x2
