"""Directional derivative estimates and the decay curve driven by a rate function."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..comparison import ComparisonFn
from ..errors import ConfigurationError, HistoryRangeError, SpecViolation
from ..history import ContinuousHistory, ExtendedView, _vec

DEFAULT_H_GRID = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
DEFAULT_TAIL = 2


def _check_h_grid(h_grid: Sequence[float]) -> np.ndarray:
    h = np.asarray(h_grid, dtype=float)
    if h.ndim != 1 or h.size == 0:
        raise ConfigurationError("h_grid must be a non-empty 1-d sequence")
    if np.any(h <= 0) or np.any(np.diff(h) >= 0):
        raise ConfigurationError("h_grid must be positive and strictly decreasing")
    return h


def _quotient_max(q: np.ndarray, tail: int | None) -> float:
    if tail is not None and tail > 0:
        q = q[-tail:]
    return float(np.max(q))


def generalized_derivative(V: Callable, t: float, x1, v, h_grid: Sequence[float] = DEFAULT_H_GRID,
                           tail: int | None = DEFAULT_TAIL, r1: float | None = None) -> float:
    """Upper estimate of the derivative of ``V(t, x1)`` along the linear extension with slope ``v``.

    ``x1`` is a view (or a ``ContinuousHistory``, viewed at its current time).
    For each step h the extended history keeps ``x1(theta + h)`` for
    ``theta <= -h`` and continues linearly with slope ``v`` on (-h, 0].  The
    result is the largest difference quotient over the ``tail`` finest steps
    (all steps when ``tail`` is None).  The perturbation of the direction in
    the limsup is not sampled.
    """
    h = _check_h_grid(h_grid)
    if isinstance(x1, ContinuousHistory):
        x1 = x1.view(x1.current_time, x1.window if r1 is None else r1)
    r = x1.r if r1 is None else r1
    if r and h[0] >= r:
        raise HistoryRangeError(f"step {h[0]!r} must be smaller than the window length {r!r}")
    v = _vec(v)
    base = float(V(t, x1))
    q = np.array([(float(V(t + hk, ExtendedView(x1, float(hk), v))) - base) / hk for hk in h])
    return _quotient_max(q, tail)


def dini_derivative(V: Callable, t: float, x, v, h_grid: Sequence[float] = DEFAULT_H_GRID,
                    tail: int | None = DEFAULT_TAIL) -> float:
    """Forward quotients ``[V(t+h, x+h v) - V(t, x)] / h``; maximum over the finest ``tail`` steps."""
    h = _check_h_grid(h_grid)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    base = float(V(t, x))
    q = np.array([(float(V(t + hk, x + hk * v)) - base) / hk for hk in h])
    return _quotient_max(q, tail)


def sigma_from_rho(rho: ComparisonFn | Callable, s0: float, t_end: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``sigma' = -rho(sigma)``, ``sigma(0) = s0`` by RK4; returns ``(times, sigma)`` clamped at 0."""
    if dt <= 0 or t_end < 0:
        raise ConfigurationError("need dt > 0 and t_end >= 0")
    if s0 < 0:
        raise ConfigurationError("s0 must be non-negative")
    n = max(1, int(np.ceil(t_end / dt - 1e-9))) if t_end > 0 else 0
    times = np.linspace(0.0, t_end, n + 1)
    out = np.empty(n + 1)
    out[0] = s0

    def rate(s: float) -> float:
        val = float(rho(max(s, 0.0)))
        if val < 0:
            raise SpecViolation(f"rho({s!r}) = {val!r} is negative")
        return val

    s = float(s0)
    for k in range(n):
        h = times[k + 1] - times[k]
        if s == 0.0:
            out[k + 1:] = 0.0
            break
        k1 = rate(s)
        k2 = rate(s - 0.5 * h * k1)
        k3 = rate(s - 0.5 * h * k2)
        k4 = rate(s - h * k3)
        s = max(0.0, s - h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0)
        out[k + 1] = s
    return times, out


def sigma_at(rho, s0: float, t: float, substeps: int = 64) -> float:
    """``sigma(s0, t)``: the last value of :func:`sigma_from_rho`."""
    if t == 0:
        return float(s0)
    return float(sigma_from_rho(rho, s0, t, t / substeps)[1][-1])
