"""Ensemble estimate of the transient surface and input gain of a system's output."""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..comparison import ComparisonFn, const
from ..errors import ConfigurationError, DelayStackError
from ..history import BoundedHistory, ContinuousHistory
from ..signals import InputSignal, Xoshiro256, derive_seed
from ..solver import CoupledSystem, solve_coupled
from .samples import random_x1, random_x2


@dataclass
class WiosEstimate:
    """``sigma_table[i, j]``: largest output norm seen in time bin j from initial size bin i.

    ``gain_curve[k]``: largest steady output norm for input amplitude k.
    Both are monotone envelopes of the raw ensemble maxima; a bin holding a
    blown-up run is ``inf``.
    """

    size_bins: np.ndarray
    time_bins: np.ndarray
    sigma_table: np.ndarray
    amplitudes: np.ndarray
    gain_curve: np.ndarray
    beta_weight: ComparisonFn = field(default_factory=lambda: const(1.0))
    delta_weight: ComparisonFn = field(default_factory=lambda: const(1.0))
    raw_sigma: np.ndarray | None = None
    raw_gain: np.ndarray | None = None
    blowups: list = field(default_factory=list)
    resolution: dict = field(default_factory=dict)

    def sigma_csv(self) -> str:
        head = "size\\time," + ",".join(repr(float(t)) for t in self.time_bins[1:])
        rows = [head] + [repr(float(s)) + "," + ",".join(repr(float(v)) for v in row)
                         for s, row in zip(self.size_bins, self.sigma_table)]
        return "\n".join(rows) + "\n"

    def gain_csv(self) -> str:
        buf = io.StringIO()
        buf.write("amplitude,gain\n")
        for a, g in zip(self.amplitudes, self.gain_curve):
            buf.write(f"{float(a)!r},{float(g)!r}\n")
        return buf.getvalue()


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DELAYSTACK_THREADS", "1")))
    except ValueError:
        return 1


def _output_norms(traj, times: np.ndarray) -> np.ndarray:
    sys = traj.system
    out = np.empty(times.size)
    for k, t in enumerate(times):
        if sys.H is not None:
            y = sys.H(t, traj.x1.view(t, sys.r1), traj.x2.view(t, t, r=sys.r2))
            out[k] = float(np.linalg.norm(np.atleast_1d(y)))
        else:
            out[k] = float(np.linalg.norm(traj.x1.sample(t))) if sys.n1 else float(np.linalg.norm(traj.x2.sample(t)))
    return out


def _scale_x1(h: ContinuousHistory, s: float) -> ContinuousHistory:
    if h.times.size == 1:
        return ContinuousHistory(h.times[0], h.values[0] * s, window=h.window)
    return ContinuousHistory.from_samples(h.times, h.values * s, window=h.window)


def _initial(sys: CoupledSystem, gen: Xoshiro256, size: float):
    """Random histories whose combined window norm equals ``size``."""
    x1 = random_x1(gen, sys.n1, 0.0, sys.r1, 1.0) if sys.n1 else None
    x2 = random_x2(gen, sys.n2, 0.0, sys.r2, 1.0) if sys.n2 else None
    norm = (x1.window_sup() if x1 is not None else 0.0) + (x2.window_sup() if x2 is not None else 0.0)
    s = size / norm if norm > 0 else 0.0
    if x1 is not None:
        x1 = _scale_x1(x1, s)
    if x2 is not None:
        x2 = BoundedHistory(x2.times, x2.values * s, window=x2.window)
    return x1, x2


def estimate_wios(sys: CoupledSystem, input_amplitudes: Sequence[float], n_trials: int = 4, horizon: float = 10.0,
                  seed: int = 0, size_bins: Sequence[float] | None = None, time_bins: int = 10,
                  hold: float = 5.0, substeps_per_step: int = 64, substep: float | None = None,
                  sample_points: int = 401) -> WiosEstimate:
    """Zero-input runs fill the transient table; zero-initial-data runs with random-sign inputs fill the gain curve."""
    sizes = np.asarray([0.1, 1.0] if size_bins is None else size_bins, dtype=float)
    amps = np.unique(np.concatenate(([0.0], np.asarray(input_amplitudes, dtype=float))))
    if n_trials < 1 or horizon <= 0 or time_bins < 1:
        raise ConfigurationError("need n_trials >= 1, horizon > 0 and time_bins >= 1")
    if np.any(sizes < 0) or np.any(amps < 0):
        raise ConfigurationError("sizes and amplitudes must be non-negative")
    edges = np.linspace(0.0, horizon, time_bins + 1)
    times = np.linspace(0.0, horizon, sample_points)
    bin_of = np.minimum(np.searchsorted(edges, times, side="right") - 1, time_bins - 1)
    blowups: list = []

    def run(x10, x20, u):
        try:
            traj = solve_coupled(sys, x10, x20, None, u, horizon, substep=substep,
                                 substeps_per_step=substeps_per_step)
        except DelayStackError as exc:
            return None, str(exc)
        if traj.status != "completed":
            return None, f"{traj.status} at t={traj.blowup[0]!r}"
        return _output_norms(traj, times[times <= traj.t_end + 1e-12]), None

    def transient(job):
        i, k = job
        gen = Xoshiro256(derive_seed(seed, i * 1000 + k))
        x10, x20 = _initial(sys, gen, float(sizes[i]))
        u = InputSignal.zero(sys.m) if sys.m else None
        return ("sigma", i, k) + run(x10, x20, u)

    def gain(job):
        j, k = job
        u = InputSignal.random_sign(sys.m, float(amps[j]), derive_seed(seed, 10**6 + j * 1000 + k), hold) \
            if sys.m else None
        return ("gain", j, k) + run(np.zeros(sys.n1) if sys.n1 else None, np.zeros(sys.n2) if sys.n2 else None, u)

    jobs = [(transient, (i, k)) for i in range(sizes.size) for k in range(n_trials)]
    if sys.m:
        jobs += [(gain, (j, k)) for j in range(amps.size) for k in range(n_trials)]
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda jb: jb[0](jb[1]), jobs))
    else:
        results = [fn(arg) for fn, arg in jobs]

    raw_sigma = np.zeros((sizes.size, time_bins))
    raw_gain = np.zeros(amps.size)
    steady = times >= 0.5 * horizon
    for kind, i, k, norms, err in results:
        if norms is None:
            blowups.append({"kind": kind, "bin": int(i), "trial": int(k), "error": err})
            # an escaped run has no finite envelope
            if kind == "sigma":
                raw_sigma[i, :] = np.inf
            else:
                raw_gain[i] = np.inf
            continue
        n = norms.size
        if kind == "sigma":
            for b in range(time_bins):
                sel = bin_of[:n] == b
                if sel.any():
                    raw_sigma[i, b] = max(raw_sigma[i, b], float(norms[sel].max()))
        else:
            sel = steady[:n]
            if sel.any():
                raw_gain[i] = max(raw_gain[i], float(norms[sel].max()))

    sigma = np.maximum.accumulate(raw_sigma[:, ::-1], axis=1)[:, ::-1]
    sigma = np.maximum.accumulate(sigma, axis=0)
    gain_curve = np.maximum.accumulate(raw_gain)
    return WiosEstimate(sizes, edges, sigma, amps, gain_curve, raw_sigma=raw_sigma, raw_gain=raw_gain,
                        blowups=blowups,
                        resolution={"n_trials": n_trials, "horizon": horizon, "time_bins": time_bins,
                                    "sample_points": sample_points, "hold": hold, "seed": seed})
