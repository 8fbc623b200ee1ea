"""Radius of initial data and inputs that keeps a solution inside an epsilon tube, and its empirical check."""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..comparison import ComparisonFn
from ..errors import ConfigurationError, DelayStackError, InversionError
from ..history import BoundedHistory, ContinuousHistory
from ..report import CertificateReport
from ..signals import InputSignal, Xoshiro256, derive_seed
from ..solver import CoupledSystem, solve_coupled
from .samples import random_x1, random_x2


def invert(fn, y: float, hi: float = 1.0, max_doublings: int = 80, iters: int = 200) -> float:
    """Smallest-bracket bisection for ``fn(s) = y`` on [0, inf) with ``fn`` increasing."""
    if y < 0:
        raise InversionError(f"cannot invert at negative value {y!r}")
    if y == 0:
        return 0.0
    lo = 0.0
    for _ in range(max_doublings):
        v = float(fn(hi))
        if not math.isfinite(v):
            raise InversionError(f"function not finite at {hi!r}")
        if v >= y:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise InversionError(f"value {y!r} not reached on [0, {hi!r}]")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if float(fn(mid)) >= y:
            hi = mid
        else:
            lo = mid
    return hi


def robustness_radius(a: ComparisonFn, beta: ComparisonFn, L_tilde: float, eps: float, T: float) -> float:
    """delta = (1/B) a^{-1}( exp(-L - 1) / (4 B) * a^{-1}(eps / 9) ) with B = beta(T + 1)."""
    if eps <= 0 or T < 0 or L_tilde < 0:
        raise ConfigurationError("need eps > 0, T >= 0, L_tilde >= 0")
    B = float(beta(T + 1.0))
    if not B >= 1.0:
        raise ConfigurationError(f"beta(T + 1) = {B!r} must be >= 1")
    inner = invert(a, eps / 9.0)
    return invert(a, math.exp(-L_tilde - 1.0) / (4.0 * B) * inner) / B


def _window_norms(traj, t0: float, h: float, points: int) -> float:
    sys = traj.system
    best = 0.0
    end = min(t0 + h, traj.t_end)
    for t in np.linspace(t0, end, points):
        n1 = traj.x1.sup_between(t - sys.r1, t) if sys.n1 else 0.0
        n2 = traj.x2.sup_between(t - sys.r2, t) if sys.n2 else 0.0
        best = max(best, n1 + n2)
    return best


def check_robust_equilibrium(sys: CoupledSystem, eps: float, T: float, h: float, n_trials: int = 20,
                             seed: int = 0, L_tilde: float = 0.0, substeps_per_step: int = 64,
                             check_points: int = 129) -> CertificateReport:
    """Simulate from random data of combined size below the radius and compare the tube sup with eps.

    The envelope is taken as ``a_eff(s) = max(a(s), s)`` and ``beta_eff`` the
    running max of ``max(beta, 1)``, which is what the radius formula needs.
    """
    if sys.envelope is None:
        raise ConfigurationError("system has no growth envelope (a, beta)")
    a, beta = sys.envelope
    a_eff = ComparisonFn(lambda s: np.maximum(a(s), s), "K_inf", a.domain_hint, f"max({a.name}, s)")
    grid = np.linspace(0.0, T + 1.0, 257)
    b_max = max(1.0, float(np.max(np.asarray(beta(grid), dtype=float) * np.ones_like(grid))))
    beta_eff = ComparisonFn(lambda t: b_max if np.ndim(t) == 0 else np.full(np.shape(t), b_max), "K_plus",
                            (0.0, T + 1.0), "beta_eff")
    delta = robustness_radius(a_eff, beta_eff, L_tilde, eps, T)
    params = {"eps": eps, "T": T, "h": h, "n_trials": n_trials, "seed": seed, "L_tilde": L_tilde}
    res = {"trials": n_trials, "check_points": check_points, "substeps_per_step": substeps_per_step}
    if delta <= 0:
        warnings.warn("robustness radius is zero; the check is vacuous", RuntimeWarning, stacklevel=2)
        return CertificateReport("robust_equilibrium", True, 0.0, None, res, params, {"delta": delta, "vacuous": True})
    lo = np.zeros(sys.d_dim) if sys.d_bounds is None else np.broadcast_to(np.asarray(sys.d_bounds[0], float), (sys.d_dim,))
    hi = np.zeros(sys.d_dim) if sys.d_bounds is None else np.broadcast_to(np.asarray(sys.d_bounds[1], float), (sys.d_dim,))
    worst, witness, blown = 0.0, None, 0
    sups = []
    for k in range(n_trials):
        gen = Xoshiro256(derive_seed(seed, k))
        t0 = gen.uniform(0.0, T)
        x1 = random_x1(gen, sys.n1, t0, sys.r1, 1.0) if sys.n1 else None
        x2 = random_x2(gen, sys.n2, t0, sys.r2, 1.0) if sys.n2 else None
        n1 = x1.window_sup() if x1 is not None else 0.0
        n2 = x2.window_sup() if x2 is not None else 0.0
        nu = 1.0 if sys.m else 0.0
        total = n1 + n2 + nu
        target = gen.uniform(0.1, 0.99) * delta
        scale = target / total if total > 0 else 0.0
        if x1 is not None:
            x1 = _scaled_x1(x1, scale)
        if x2 is not None:
            x2 = _scaled_x2(x2, scale)
        u = InputSignal.random(sys.m, -scale, scale, derive_seed(seed, 10_000 + k), hold=0.1, t0=t0) if sys.m else None
        d = InputSignal.random(sys.d_dim, lo, hi, derive_seed(seed, 20_000 + k), hold=0.1, t0=t0) if sys.d_dim else None
        try:
            traj = solve_coupled(sys, x1, x2, d, u, horizon=h, t0=t0, substeps_per_step=substeps_per_step)
        except DelayStackError as exc:
            blown += 1
            witness = witness or {"trial": k, "t0": t0, "error": str(exc)}
            continue
        if traj.status != "completed":
            blown += 1
            witness = witness or {"trial": k, "t0": t0, "status": traj.status}
            continue
        s = _window_norms(traj, t0, h, check_points)
        sups.append(s)
        if s > worst:
            worst = s
        if s >= eps and witness is None:
            witness = {"trial": k, "t0": t0, "initial_size": target, "tube_sup": s}
    passed = witness is None
    return CertificateReport("robust_equilibrium", passed, eps - worst, witness, res, params,
                             {"delta": delta, "worst_sup": worst, "failed_runs": blown, "sups": sups})


def _scaled_x1(hist, scale: float):
    T, X = hist.times, hist.values
    if T.size == 1:
        return ContinuousHistory(T[0], X[0] * scale, window=hist.window)
    return ContinuousHistory.from_samples(T, X * scale, window=hist.window)


def _scaled_x2(hist, scale: float):
    return BoundedHistory(hist.times, hist.values * scale, window=hist.window)
