"""History buffers for the two solution channels.

``ContinuousHistory`` stores the continuous channel as cubic Hermite pieces
between nodes.  ``BoundedHistory`` stores the possibly discontinuous channel
as a flat, time-ordered sample list; a jump at time ``s`` appears as two
consecutive entries with the same time, the first holding the value taken
*at* ``s`` and the second the right limit.  Between entries values are
interpolated linearly.

Views (``ContinuousView``, ``BoundedView``) are what user callbacks receive.
They are indexed by offsets ``theta`` relative to the evaluation time.
"""

from __future__ import annotations

import bisect
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, ExplicitnessError, HistoryRangeError

JUMP_TOL = 1e-12


def time_tol(t: float) -> float:
    """Tolerance used to identify two time stamps."""
    return 1e-12 * (1.0 + abs(t))


def _vec(x, dim: int | None = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if dim is not None and arr.size != dim:
        if arr.size == 1:
            return np.full(dim, float(arr[0]))
        raise ContractViolation(f"expected a vector of length {dim}, got {arr.size}")
    return arr


def _simpson(fvals: np.ndarray, h: float) -> np.ndarray:
    return h / 3.0 * (fvals[0] + fvals[-1] + 4.0 * fvals[1:-1:2].sum(axis=0) + 2.0 * fvals[2:-1:2].sum(axis=0))


# ---------------------------------------------------------------- continuous channel

@dataclass(frozen=True)
class HermitePiece:
    """A cubic piece on [t_a, t_b] given by endpoint values and derivatives."""

    t_a: float
    t_b: float
    x_a: np.ndarray
    x_b: np.ndarray
    dx_a: np.ndarray
    dx_b: np.ndarray


class ContinuousHistory:
    """Dense record of a continuous vector function as cubic Hermite pieces.

    ``window=None`` keeps the full record; otherwise pieces older than the
    window are dropped as the history advances.
    """

    def __init__(self, t: float, x, dx=None, window: float | None = None):
        x = _vec(x)
        self.dim = x.size
        self.window = window
        self._t = [float(t)]
        self._x = [x]
        d = np.zeros(self.dim) if dx is None else _vec(dx, self.dim)
        self._dl = [d]
        self._dr = [d]
        self._lo = 0
        self._cache = None

    # construction -------------------------------------------------------
    @classmethod
    def from_function(cls, fn: Callable[[float], object], t0: float, window: float,
                      nodes: int = 256, deriv: Callable | None = None, spacing: float | None = None,
                      keep: float | None | str = "window") -> "ContinuousHistory":
        """Sample ``fn(theta)`` for theta in [-window, 0] (time t0 + theta)."""
        window = float(window)
        if window < 0:
            raise ContractViolation("window must be >= 0")
        if window == 0:
            thetas = np.array([0.0])
        elif spacing is not None:
            k = max(1, int(math.ceil(window / spacing - 1e-9)))
            thetas = np.concatenate(([-window], -spacing * np.arange(k - 1, -1, -1)))
            thetas[0] = -window
            thetas = np.unique(thetas)
        else:
            thetas = np.linspace(-window, 0.0, nodes + 1)
        xs = [_vec(fn(float(th))) for th in thetas]
        dim = xs[0].size
        if deriv is not None:
            ds = [_vec(deriv(float(th)), dim) for th in thetas]
        else:
            ds = [_numeric_derivative(fn, float(th), -window, 0.0, dim) for th in thetas]
        hist = cls(t0 + thetas[0], xs[0], ds[0], window=window if keep == "window" else keep)
        for th, x, d in zip(thetas[1:], xs[1:], ds[1:]):
            hist.append_node(t0 + th, x, d)
            hist.set_right_derivative(d)
        return hist

    @classmethod
    def constant(cls, c, t0: float, window: float, keep: float | None | str = "window") -> "ContinuousHistory":
        c = _vec(c)
        hist = cls(t0 - window, c, np.zeros_like(c), window=window if keep == "window" else keep)
        if window > 0:
            hist.append_node(t0, c, np.zeros_like(c))
        return hist

    @classmethod
    def from_samples(cls, times, values, window: float | None = None) -> "ContinuousHistory":
        """Piecewise-linear data: Hermite pieces with one-sided slopes (exact for linear pieces)."""
        times = np.asarray(times, dtype=float)
        vals = np.atleast_2d(np.asarray(values, dtype=float))
        if vals.shape[0] != times.size:
            vals = vals.T
        slopes = np.diff(vals, axis=0) / np.diff(times)[:, None]
        first = slopes[0] if slopes.size else np.zeros(vals.shape[1])
        hist = cls(times[0], vals[0], first, window=window)
        for k in range(1, times.size):
            hist.append_node(times[k], vals[k], slopes[k - 1])
            if k < times.size - 1:
                hist.set_right_derivative(slopes[k])
        return hist

    # internal mutation (used by the solver) -----------------------------
    def append_node(self, t: float, x, dx_left) -> None:
        if t <= self._t[-1]:
            raise ContractViolation(f"node time {t!r} does not advance past {self._t[-1]!r}")
        x = _vec(x, self.dim)
        d = _vec(dx_left, self.dim)
        self._t.append(float(t))
        self._x.append(x)
        self._dl.append(d)
        self._dr.append(d)
        self._cache = None
        self._trim()

    def set_right_derivative(self, dx) -> None:
        self._dr[-1] = _vec(dx, self.dim)
        self._cache = None

    def set_node_derivative(self, dx) -> None:
        """Use ``dx`` as both one-sided derivatives at the newest node."""
        d = _vec(dx, self.dim)
        self._dl[-1] = d
        self._dr[-1] = d
        self._cache = None

    def shift_append(self, piece: HermitePiece) -> "ContinuousHistory":
        cur = self._t[-1]
        if abs(piece.t_a - cur) > time_tol(cur):
            raise ContractViolation(f"piece starts at {piece.t_a!r}, history ends at {cur!r}")
        if self.dim and np.max(np.abs(_vec(piece.x_a, self.dim) - self._x[-1])) > JUMP_TOL * (1 + np.max(np.abs(self._x[-1]))):
            raise ContractViolation("appended piece is not continuous with the history")
        self.set_right_derivative(piece.dx_a)
        self.append_node(piece.t_b, piece.x_b, piece.dx_b)
        return self

    def _trim(self) -> None:
        if self.window is None:
            return
        edge = self._t[-1] - self.window
        keep_from = max(self._lo, bisect.bisect_right(self._t, edge + time_tol(edge), self._lo) - 1)
        self._lo = keep_from
        if self._lo > 4096 and self._lo > len(self._t) // 2:
            for lst in (self._t, self._x, self._dl, self._dr):
                del lst[: self._lo]
            self._lo = 0

    # queries --------------------------------------------------------------
    @property
    def current_time(self) -> float:
        return self._t[-1]

    @property
    def left_time(self) -> float:
        if self.window is None:
            return self._t[self._lo]
        return max(self._t[self._lo], self._t[-1] - self.window)

    @property
    def current_value(self) -> np.ndarray:
        return self._x[-1]

    def sample(self, t: float) -> np.ndarray:
        ts = self._t
        lo, hi = self.left_time, ts[-1]
        if t < lo - time_tol(lo) or t > hi + time_tol(hi):
            raise HistoryRangeError(f"t={t!r} outside stored window [{lo!r}, {hi!r}]")
        i = bisect.bisect_right(ts, t, self._lo)
        if i >= len(ts):
            return self._x[-1].copy()
        if i <= self._lo:
            return self._x[self._lo].copy()
        t0, t1 = ts[i - 1], ts[i]
        h = t1 - t0
        s = (t - t0) / h
        s2 = s * s
        s3 = s2 * s
        return ((2 * s3 - 3 * s2 + 1) * self._x[i - 1] + (s3 - 2 * s2 + s) * h * self._dr[i - 1]
                + (-2 * s3 + 3 * s2) * self._x[i] + (s3 - s2) * h * self._dl[i])

    def derivative(self, t: float) -> np.ndarray:
        """Derivative of the dense output (left piece at nodes)."""
        ts = self._t
        i = bisect.bisect_left(ts, t, self._lo)
        i = min(max(i, self._lo + 1), len(ts) - 1)
        t0, t1 = ts[i - 1], ts[i]
        h = t1 - t0
        s = (t - t0) / h
        return ((6 * s * s - 6 * s) * self._x[i - 1] / h + (3 * s * s - 4 * s + 1) * self._dr[i - 1]
                + (-6 * s * s + 6 * s) * self._x[i] / h + (3 * s * s - 2 * s) * self._dl[i])

    def _arrays(self):
        if self._cache is None:
            sl = slice(self._lo, None)
            self._cache = (np.array(self._t[sl]), np.array(self._x[sl]),
                           np.array(self._dr[sl]), np.array(self._dl[sl]))
        return self._cache

    @property
    def times(self) -> np.ndarray:
        return self._arrays()[0]

    @property
    def values(self) -> np.ndarray:
        return self._arrays()[1]

    def sup_between(self, ta: float, tb: float) -> float:
        """Sup of the Euclidean norm on [ta, tb] (absolute times)."""
        if tb < ta:
            raise HistoryRangeError(f"empty interval [{ta!r}, {tb!r}]")
        best = max(np.linalg.norm(self.sample(ta)), np.linalg.norm(self.sample(tb)))
        T, X, DR, DL = self._arrays()
        if T.size < 2:
            return float(best)
        i0 = max(int(np.searchsorted(T, ta, side="right")) - 1, 0)
        i1 = min(int(np.searchsorted(T, tb, side="left")), T.size - 1)
        if i1 <= i0:
            return float(best)
        inner = (T[i0:i1 + 1] > ta) & (T[i0:i1 + 1] < tb)
        if inner.any():
            best = max(best, float(np.max(np.linalg.norm(X[i0:i1 + 1][inner], axis=1))))
        # interior extrema of each cubic component
        t0, t1 = T[i0:i1], T[i0 + 1:i1 + 1]
        h = (t1 - t0)[:, None]
        x0, x1, d0, d1 = X[i0:i1], X[i0 + 1:i1 + 1], DR[i0:i1], DL[i0 + 1:i1 + 1]
        a = 2 * (x0 - x1) + h * (d0 + d1)
        b = 3 * (x1 - x0) - h * (2 * d0 + d1)
        c = h * d0
        # roots of 3a s^2 + 2b s + c
        A, B, C = 3 * a, 2 * b, c
        disc = B * B - 4 * A * C
        cand = []
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
            for root in ((-B + sq) / (2 * A), (-B - sq) / (2 * A), np.where(A == 0, -C / B, np.nan)):
                cand.append(root)
        for root in cand:
            for k, j in zip(*np.nonzero(np.isfinite(root) & (root > 0) & (root < 1))):
                tt = float(t0[k] + root[k, j] * h[k, 0])
                if ta < tt < tb:
                    best = max(best, float(np.linalg.norm(self.sample(tt))))
        return float(best)

    def window_sup(self, a: float | None = None, b: float = 0.0) -> float:
        """Sup norm over the sub-window [a, b] of offsets relative to the current time."""
        cur = self._t[-1]
        w = (cur - self.left_time) if self.window is None else self.window
        a = -w if a is None else a
        if a > b or a < -w - time_tol(w) or b > time_tol(cur):
            raise HistoryRangeError(f"sub-window [{a!r}, {b!r}] not inside [-{w!r}, 0]")
        return self.sup_between(cur + max(a, -w), cur + min(b, 0.0))

    def truncated(self, t_end: float | None = None, window: float | None | str = "same") -> "ContinuousHistory":
        """Copy holding the nodes up to ``t_end`` (which must be a node time)."""
        t_end = self._t[-1] if t_end is None else t_end
        k = bisect.bisect_right(self._t, t_end + time_tol(t_end), self._lo)
        if abs(self._t[k - 1] - t_end) > time_tol(t_end):
            raise ContractViolation(f"{t_end!r} is not a node time")
        out = ContinuousHistory.__new__(ContinuousHistory)
        out.dim = self.dim
        out.window = self.window if window == "same" else window
        out._t = self._t[self._lo:k]
        out._x = self._x[self._lo:k]
        out._dl = self._dl[self._lo:k]
        out._dr = self._dr[self._lo:k]
        out._dr[-1] = out._dl[-1]
        out._lo = 0
        out._cache = None
        return out

    def view(self, t: float | None = None, r: float | None = None) -> "ContinuousView":
        t = self._t[-1] if t is None else t
        return ContinuousView(self, t, self.window if r is None else r)

    def to_csv(self) -> str:
        T, X = self.times, self.values
        return _csv_table(T, X)


def _numeric_derivative(fn, th: float, lo: float, hi: float, dim: int, h: float = 1e-5) -> np.ndarray:
    if th - h >= lo and th + h <= hi:
        return (_vec(fn(th + h)) - _vec(fn(th - h))) / (2 * h)
    if th + 2 * h <= hi:
        return (-3 * _vec(fn(th)) + 4 * _vec(fn(th + h)) - _vec(fn(th + 2 * h))) / (2 * h)
    if th - 2 * h >= lo:
        return (3 * _vec(fn(th)) - 4 * _vec(fn(th - h)) + _vec(fn(th - 2 * h))) / (2 * h)
    return np.zeros(dim)


def _csv_table(T: np.ndarray, X: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("t," + ",".join(f"x_{j}" for j in range(X.shape[1])) + "\n")
    for t, row in zip(T, X):
        buf.write(repr(float(t)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------- bounded channel

@dataclass(frozen=True)
class BoundedSegment:
    """Values on (t_start, times[-1]]: ``start_value`` is the right limit at t_start."""

    t_start: float
    start_value: np.ndarray
    times: np.ndarray
    values: np.ndarray

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


class BoundedHistory:
    """Possibly discontinuous record on (current - window, current] plus the edge value."""

    def __init__(self, times: Sequence[float], values, window: float | None = None):
        times = [float(t) for t in times]
        vals = [_vec(v) for v in values]
        if not times or len(times) != len(vals):
            raise ContractViolation("times and values must be non-empty and of equal length")
        self.dim = vals[0].size
        for a, b in zip(times, times[1:]):
            if b < a:
                raise ContractViolation("times must be non-decreasing")
        self._t = times
        self._v = [_vec(v, self.dim) for v in vals]
        self.window = window
        self._lo = 0
        self._jumps = [a for a, b in zip(times, times[1:]) if a == b]
        self._cache = None

    # construction -------------------------------------------------------
    @classmethod
    def from_pieces(cls, pieces: Sequence[tuple[float, float, Callable]], t0: float, spacing: float,
                    edge_value=None, keep: float | None | str = "window") -> "BoundedHistory":
        """Pieces ``(a, b, fn)`` cover (a, b] in offsets; ``fn(theta)`` also gives the right limit at a.

        Samples sit on the grid ``t0 - k * spacing`` plus piece endpoints.
        """
        pieces = sorted(pieces, key=lambda p: p[0])
        a0 = pieces[0][0]
        window = -a0
        grid = -spacing * np.arange(int(math.floor(window / spacing + 1e-9)), -1, -1)
        first = pieces[0][2]
        edge = _vec(first(a0) if edge_value is None else edge_value)
        times, vals = [t0 + a0], [edge]
        for idx, (a, b, fn) in enumerate(pieces):
            if idx and abs(a - pieces[idx - 1][1]) > 1e-12:
                raise ContractViolation("pieces must be contiguous")
            start = _vec(fn(a))
            if start.size and np.max(np.abs(start - vals[-1])) > JUMP_TOL:
                times.append(t0 + a)
                vals.append(start)
            inner = grid[(grid > a + 1e-12) & (grid < b - 1e-12)]
            for th in inner:
                times.append(t0 + float(th))
                vals.append(_vec(fn(float(th))))
            times.append(t0 + b)
            vals.append(_vec(fn(b)))
        if abs(pieces[-1][1]) > 1e-12:
            raise ContractViolation("last piece must end at offset 0")
        return cls(times, vals, window=window if keep == "window" else keep)

    @classmethod
    def from_function(cls, fn: Callable, t0: float, window: float, spacing: float,
                      keep: float | None | str = "window") -> "BoundedHistory":
        if window == 0:
            return cls([t0], [fn(0.0)], window=0.0 if keep == "window" else keep)
        return cls.from_pieces([(-window, 0.0, fn)], t0, spacing, keep=keep)

    @classmethod
    def constant(cls, c, t0: float, window: float, keep: float | None | str = "window") -> "BoundedHistory":
        c = _vec(c)
        w = window if keep == "window" else keep
        if window == 0:
            return cls([t0], [c], window=w)
        return cls([t0 - window, t0], [c, c], window=w)

    # mutation -------------------------------------------------------------
    def shift_append(self, seg: BoundedSegment) -> "BoundedHistory":
        cur = self._t[-1]
        if abs(seg.t_start - cur) > time_tol(cur):
            raise ContractViolation(f"segment starts at {seg.t_start!r}, history ends at {cur!r}")
        times = np.asarray(seg.times, dtype=float)
        vals = np.atleast_2d(np.asarray(seg.values, dtype=float))
        if times.size == 0 or times[0] <= cur or np.any(np.diff(times) <= 0):
            raise ContractViolation("segment times must increase strictly after its start")
        if not np.all(np.isfinite(vals)):
            raise ContractViolation("segment values must be finite")
        start = _vec(seg.start_value, self.dim)
        if self.dim and np.max(np.abs(start - self._v[-1])) > JUMP_TOL:
            self._t.append(cur)
            self._v.append(start)
            self._jumps.append(cur)
        self._t.extend(float(t) for t in times)
        self._v.extend(vals[k].copy() for k in range(times.size))
        self._cache = None
        self._trim()
        return self

    def _trim(self) -> None:
        if self.window is None:
            return
        edge = self._t[-1] - self.window
        # keep one entry at or before the edge for interpolation
        self._lo = max(self._lo, bisect.bisect_left(self._t, edge - time_tol(edge), self._lo) - 1, 0)
        if self._lo > 4096 and self._lo > len(self._t) // 2:
            del self._t[: self._lo]
            del self._v[: self._lo]
            self._lo = 0
        while self._jumps and self._jumps[0] < edge - time_tol(edge):
            self._jumps.pop(0)

    # queries --------------------------------------------------------------
    @property
    def current_time(self) -> float:
        return self._t[-1]

    @property
    def left_time(self) -> float:
        if self.window is None:
            return self._t[self._lo]
        return max(self._t[self._lo], self._t[-1] - self.window)

    @property
    def current_value(self) -> np.ndarray:
        return self._v[-1]

    @property
    def jump_points(self) -> list[float]:
        return list(self._jumps)

    def sample(self, t: float, right: bool = False) -> np.ndarray:
        """Value at ``t``; at a stored jump the value taken at that time unless ``right``."""
        ts = self._t
        lo, hi = self.left_time, ts[-1]
        tol = time_tol(t)
        if t < lo - tol or t > hi + tol:
            raise HistoryRangeError(f"t={t!r} outside stored window [{lo!r}, {hi!r}]")
        i = bisect.bisect_left(ts, t - tol, self._lo)
        n = len(ts)
        if i < n and ts[i] <= t + tol:
            if right and i + 1 < n and ts[i + 1] == ts[i]:
                return self._v[i + 1]
            return self._v[i]
        if i <= self._lo:
            i = self._lo + 1
        t0, t1 = ts[i - 1], ts[i]
        w = (t - t0) / (t1 - t0)
        v0 = self._v[i - 1]
        return v0 + w * (self._v[i] - v0)

    def _arrays(self):
        if self._cache is None:
            self._cache = (np.array(self._t[self._lo:]), np.array(self._v[self._lo:]))
        return self._cache

    @property
    def times(self) -> np.ndarray:
        return self._arrays()[0]

    @property
    def values(self) -> np.ndarray:
        return self._arrays()[1]

    def sup_between(self, ta: float, tb: float) -> float:
        if tb < ta:
            raise HistoryRangeError(f"empty interval [{ta!r}, {tb!r}]")
        best = max(np.linalg.norm(self.sample(ta)), np.linalg.norm(self.sample(tb)))
        T, V = self._arrays()
        i0 = int(np.searchsorted(T, ta - time_tol(ta), side="left"))
        i1 = int(np.searchsorted(T, tb + time_tol(tb), side="right"))
        if i1 > i0:
            best = max(best, float(np.max(np.linalg.norm(V[i0:i1], axis=1))))
        return float(best)

    def window_sup(self, a: float | None = None, b: float = 0.0) -> float:
        cur = self._t[-1]
        w = (cur - self.left_time) if self.window is None else self.window
        a = -w if a is None else a
        if a > b or a < -w - time_tol(w) or b > time_tol(cur):
            raise HistoryRangeError(f"sub-window [{a!r}, {b!r}] not inside [-{w!r}, 0]")
        return self.sup_between(cur + max(a, -w), cur + min(b, 0.0))

    def truncated(self, t_end: float | None = None, window: float | None | str = "same") -> "BoundedHistory":
        """Copy holding the record up to and including the value taken at ``t_end``."""
        t_end = self._t[-1] if t_end is None else t_end
        k = bisect.bisect_left(self._t, t_end - time_tol(t_end), self._lo)
        if k >= len(self._t) or abs(self._t[k] - t_end) > time_tol(t_end):
            raise ContractViolation(f"{t_end!r} is not a stored sample time")
        return BoundedHistory(self._t[self._lo:k + 1], self._v[self._lo:k + 1],
                              window=self.window if window == "same" else window)

    def view(self, t: float | None = None, known_until: float | None = None, right: bool = False,
             r: float | None = None) -> "BoundedView":
        t = self._t[-1] if t is None else t
        return BoundedView(self, t, self._t[-1] if known_until is None else known_until, right,
                           self.window if r is None else r)

    def to_csv(self) -> str:
        T, V = self._arrays()
        return _csv_table(T, V)


# ---------------------------------------------------------------- views

class ContinuousView:
    """Offsets-relative access to the continuous channel at time ``t``.

    During an integrator stage, ``stage`` holds ``(t_n, x_n, x_stage)``: the
    last committed node and the trial state at ``t``.  Offsets falling between
    them are interpolated linearly.
    """

    __slots__ = ("hist", "t", "r", "stage")

    def __init__(self, hist: ContinuousHistory, t: float, r: float | None, stage=None):
        self.hist = hist
        self.t = t
        self.r = r
        self.stage = stage

    @property
    def now(self) -> np.ndarray:
        if self.stage is not None:
            return self.stage[2]
        return self.hist.sample(self.t)

    def __call__(self, theta: float = 0.0) -> np.ndarray:
        q = self.t + theta
        st = self.stage
        if st is not None:
            tn, xn, xs = st
            if q >= self.t - time_tol(self.t):
                return xs
            if q > tn:
                w = (q - tn) / (self.t - tn)
                return xn + w * (xs - xn)
        return self.hist.sample(q)

    def at(self, time: float) -> np.ndarray:
        return self(time - self.t)

    def sup(self, a: float | None = None, b: float = 0.0) -> float:
        a = -(self.r or 0.0) if a is None else a
        st = self.stage
        if st is None:
            return self.hist.sup_between(self.t + a, self.t + b)
        tn, xn, xs = st
        best = 0.0
        if self.t + a <= tn:
            best = self.hist.sup_between(self.t + a, min(tn, self.t + b))
        if self.t + b > tn:
            best = max(best, float(np.linalg.norm(self(max(a, tn - self.t)))), float(np.linalg.norm(self(b))))
        return best

    def integrate(self, a: float, b: float, fn: Callable | None = None, panels: int = 64) -> np.ndarray:
        """Composite Simpson of ``fn(x(t+theta))`` (default identity) over theta in [a, b]."""
        panels += panels % 2
        th = np.linspace(a, b, panels + 1)
        vals = np.array([self(x) if fn is None else _vec(fn(self(x))) for x in th])
        return _simpson(vals, (b - a) / panels)


class BoundedView:
    """Offsets-relative access to the bounded channel at time ``t``.

    Only data up to ``known_until`` may be read; asking for later values
    raises ``ExplicitnessError``.  ``right=True`` selects right limits at
    stored jump points (used when evaluating at the start of a step).
    """

    __slots__ = ("hist", "t", "known_until", "right", "r")

    def __init__(self, hist: BoundedHistory, t: float, known_until: float, right: bool = False,
                 r: float | None = None):
        self.hist = hist
        self.t = t
        self.known_until = known_until
        self.right = right
        self.r = r

    def __call__(self, theta: float) -> np.ndarray:
        q = self.t + theta
        if q > self.known_until + time_tol(q):
            raise ExplicitnessError(
                f"x2 requested at time {q!r} but only known up to {self.known_until!r} (t={self.t!r})")
        return self.hist.sample(q, right=self.right)

    def at(self, time: float) -> np.ndarray:
        return self(time - self.t)

    @property
    def now(self) -> np.ndarray:
        return self(0.0)

    def sup(self, a: float | None = None, b: float | None = None) -> float:
        a = -(self.r or 0.0) if a is None else a
        b = self.known_until - self.t if b is None else b
        if self.t + b > self.known_until + time_tol(self.known_until):
            raise ExplicitnessError(f"sup window reaches past {self.known_until!r}")
        return self.hist.sup_between(self.t + a, self.t + b)

    def integrate(self, a: float, b: float, fn: Callable | None = None, panels: int | None = None) -> np.ndarray:
        """Composite Simpson over theta in [a, b]; default panel count follows the cached grid."""
        if panels is None:
            T = self.hist.times
            inside = np.count_nonzero((T >= self.t + a) & (T <= self.t + b))
            panels = max(2, inside)
        panels += panels % 2
        th = np.linspace(a, b, panels + 1)
        vals = np.array([self(x) if fn is None else _vec(fn(self(x))) for x in th])
        return _simpson(vals, (b - a) / panels)


class ExtendedView:
    """The shifted history with a linear extension of slope ``v`` over the last ``h``.

    theta in (-h, 0]: x(0) + (theta + h) v;  theta <= -h: x(theta + h).
    """

    __slots__ = ("base", "h", "v", "t", "r", "_x0")

    def __init__(self, base, h: float, v):
        self.base = base
        self.h = h
        self.v = _vec(v)
        self.t = base.t + h
        self.r = base.r
        self._x0 = base(0.0)

    @property
    def now(self) -> np.ndarray:
        return self._x0 + self.h * self.v

    def __call__(self, theta: float = 0.0) -> np.ndarray:
        if theta > -self.h:
            return self._x0 + (theta + self.h) * self.v
        return self.base(theta + self.h)

    def sup(self, a: float | None = None, b: float = 0.0) -> float:
        a = -(self.r or 0.0) if a is None else a
        best = 0.0
        if a <= -self.h:
            best = self.base.sup(a + self.h, min(b, -self.h) + self.h)
        if b > -self.h:
            lo = max(a, -self.h)
            best = max(best, float(np.linalg.norm(self(lo))), float(np.linalg.norm(self(b))))
        return best

    def integrate(self, a: float, b: float, fn: Callable | None = None, panels: int = 64) -> np.ndarray:
        panels += panels % 2
        th = np.linspace(a, b, panels + 1)
        vals = np.array([self(x) if fn is None else _vec(fn(self(x))) for x in th])
        return _simpson(vals, (b - a) / panels)
