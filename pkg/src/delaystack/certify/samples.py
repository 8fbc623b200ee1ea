"""Sample states for certificate checks: random histories and states taken from simulations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DelayStackError
from ..history import BoundedHistory, ContinuousHistory
from ..signals import InputSignal, Xoshiro256, derive_seed, random_continuous_samples
from ..solver import CoupledSystem, solve_coupled

DEFAULT_SCALES = (1e-2, 1e-1, 1.0, 10.0, 100.0)


@dataclass
class ScenarioSample:
    """One point ``(t, x1, x2, u, v1, v2, d)``; histories end at ``t``."""

    t: float
    x1: ContinuousHistory
    x2: BoundedHistory
    u: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    d: np.ndarray
    source: str = "random"

    def x1_view(self, r1: float):
        return self.x1.view(self.t, r1)

    def x2_view(self, r2: float, known_until: float | None = None):
        return self.x2.view(self.t, self.t if known_until is None else known_until, r=r2)


def _box(sys: CoupledSystem) -> tuple[np.ndarray, np.ndarray]:
    if sys.d_bounds is None:
        return np.zeros(sys.d_dim), np.zeros(sys.d_dim)
    lo, hi = sys.d_bounds
    return (np.broadcast_to(np.asarray(lo, dtype=float), (sys.d_dim,)).copy(),
            np.broadcast_to(np.asarray(hi, dtype=float), (sys.d_dim,)).copy())


def random_x1(gen: Xoshiro256, dim: int, t: float, window: float, scale: float) -> ContinuousHistory:
    th, vals = random_continuous_samples(gen, dim, window, scale)
    if th.size == 1:
        return ContinuousHistory(t, vals[0], window=0.0)
    return ContinuousHistory.from_samples(t + th, vals, window=window)


def random_x2(gen: Xoshiro256, dim: int, t: float, window: float, scale: float, jumps: int = 2) -> BoundedHistory:
    """Piecewise-linear record with up to ``jumps`` interior discontinuities."""
    th, vals = random_continuous_samples(gen, dim, window, scale)
    if th.size == 1:
        return BoundedHistory([t], vals, window=0.0)
    times, rows = [], []
    inner = list(range(1, th.size - 1))
    cut = set(inner[gen.integers(len(inner))] for _ in range(jumps)) if inner else set()
    for k, (s, v) in enumerate(zip(th, vals)):
        times.append(t + s)
        rows.append(v)
        if k in cut:
            times.append(t + s)
            rows.append(gen.uniform(-scale, scale, dim))
    return BoundedHistory(times, rows, window=window)


def _vec_in(gen: Xoshiro256, dim: int, scale: float) -> np.ndarray:
    return gen.uniform(-scale, scale, dim) if dim else np.zeros(0)


def random_samples(sys: CoupledSystem, n: int, seed: int = 0, t_range: tuple[float, float] = (0.0, 10.0),
                   scales: Sequence[float] = DEFAULT_SCALES, v1_dim: int | None = None,
                   v2_dim: int | None = None) -> list[ScenarioSample]:
    v1_dim = int(sys.meta.get("v1_dim", sys.n2)) if v1_dim is None else v1_dim
    v2_dim = int(sys.meta.get("v2_dim", sys.n1)) if v2_dim is None else v2_dim
    lo, hi = _box(sys)
    out = []
    for k in range(n):
        gen = Xoshiro256(derive_seed(seed, k))
        scale = float(scales[k % len(scales)])
        t = gen.uniform(*t_range)
        out.append(ScenarioSample(
            t=t,
            x1=random_x1(gen, sys.n1, t, sys.r1, scale),
            x2=random_x2(gen, sys.n2, t, sys.r2, scale),
            u=_vec_in(gen, sys.m, scale),
            v1=_vec_in(gen, v1_dim, scale),
            v2=_vec_in(gen, v2_dim, scale),
            d=gen.uniform(lo, hi, sys.d_dim) if sys.d_dim else np.zeros(0),
        ))
    return out


def harvested_samples(sys: CoupledSystem, n: int, seed: int = 0, scales: Sequence[float] = DEFAULT_SCALES,
                      runs: int = 4, horizon: float | None = None,
                      substeps_per_step: int = 32) -> list[ScenarioSample]:
    """States visited by simulated trajectories (random initial data, disturbances and inputs).

    Inputs ``v1``/``v2`` are the actual coupling values when the system is an
    interconnection; otherwise random.
    """
    if n <= 0:
        return []
    r = max(sys.r1, sys.r2, 1e-3)
    horizon = 3.0 * max(r, 1.0) if horizon is None else horizon
    lo, hi = _box(sys)
    per_run = int(math.ceil(n / runs))
    out: list[ScenarioSample] = []
    for j in range(runs):
        gen = Xoshiro256(derive_seed(seed ^ 0x5EED, j))
        scale = float(scales[j % len(scales)])
        x10 = random_x1(gen, sys.n1, 0.0, sys.r1, scale) if sys.n1 else None
        x20 = random_x2(gen, sys.n2, 0.0, sys.r2, scale) if sys.n2 else None
        d = InputSignal.random(sys.d_dim, lo, hi, seed=derive_seed(seed, 1000 + j), hold=0.25 * r) \
            if sys.d_dim else None
        u = InputSignal.random(sys.m, -scale, scale, seed=derive_seed(seed, 2000 + j), hold=0.25 * r) \
            if sys.m else None
        try:
            traj = solve_coupled(sys, x10, x20, d, u, horizon, substeps_per_step=substeps_per_step)
        except DelayStackError:
            continue
        grid = traj.grid()
        grid = grid[grid >= r]
        if grid.size == 0:
            continue
        for _ in range(per_run):
            t = float(grid[gen.integers(grid.size)])
            x1 = traj.x1.truncated(t, window=sys.r1) if sys.n1 else ContinuousHistory(t, np.zeros(0))
            x2 = traj.x2.truncated(t, window=sys.r2) if sys.n2 else BoundedHistory([t], [np.zeros(0)])
            dv = traj.d(t) if sys.d_dim else np.zeros(0)
            uv = traj.u(t) if sys.m else np.zeros(0)
            v1 = _coupling(sys.H2, t, x2.view(t, t - sys.tau_at(t), r=sys.r2)) if sys.H2 and sys.n2 else None
            v2 = _coupling(sys.H1, t, x1.view(t, sys.r1)) if sys.H1 and sys.n1 else None
            if v1 is None:
                v1 = _vec_in(gen, int(sys.meta.get("v1_dim", sys.n2)), scale)
            if v2 is None:
                v2 = _vec_in(gen, int(sys.meta.get("v2_dim", sys.n1)), scale)
            out.append(ScenarioSample(t, x1, x2, uv, v1, v2, dv, source="trajectory"))
            if len(out) >= n:
                return out
    return out


def _coupling(H, t, view) -> np.ndarray | None:
    try:
        return np.atleast_1d(np.asarray(H(t, view), dtype=float))
    except DelayStackError:
        return None


def mixed_samples(sys: CoupledSystem, n: int = 1000, seed: int = 0, harvest_fraction: float = 0.5,
                  **kw) -> list[ScenarioSample]:
    """Half random, half harvested by default; the random part tops up any harvesting shortfall."""
    n_h = int(round(n * harvest_fraction))
    harvest_kw = {k: kw[k] for k in ("scales", "runs", "horizon", "substeps_per_step") if k in kw}
    random_kw = {k: kw[k] for k in ("scales", "t_range", "v1_dim", "v2_dim") if k in kw}
    got = harvested_samples(sys, n_h, seed, **harvest_kw) if n_h else []
    return got + random_samples(sys, n - len(got), seed, **random_kw)
