"""Input signals and the seeded generator behind every random draw.

Random numbers come from xoshiro256** seeded through splitmix64:

    splitmix64:  x += 0x9E3779B97F4A7C15
                 z = x
                 z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
                 z = (z ^ (z >> 27)) * 0x94D049BB133111EB
                 return z ^ (z >> 31)

    xoshiro256** state s0..s3 (the first four splitmix64 outputs):
                 result = rotl(s1 * 5, 7) * 9
                 t  = s1 << 17
                 s2 ^= s0;  s3 ^= s1;  s1 ^= s2;  s0 ^= s3
                 s2 ^= t;   s3 = rotl(s3, 45)

All arithmetic is modulo 2**64.  A double in [0, 1) is ``(result >> 11) * 2**-53``.
Per-trial streams use ``derive_seed(master, index)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import exprlang
from .errors import ConfigurationError

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Independent child seed for trial ``index`` of a run seeded with ``master``."""
    _, out = splitmix64((int(master) + _GOLDEN * (int(index) + 1)) & _MASK)
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** generator (see module docstring for the update equations)."""

    def __init__(self, seed: int = 0):
        x = int(seed) & _MASK
        s = []
        for _ in range(4):
            x, out = splitmix64(x)
            s.append(out)
        self.s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, lo=0.0, hi=1.0, size: int | None = None):
        if size is None:
            return lo + (hi - lo) * self.random()
        lo_a = np.broadcast_to(np.asarray(lo, dtype=float), (size,))
        hi_a = np.broadcast_to(np.asarray(hi, dtype=float), (size,))
        return np.array([a + (b - a) * self.random() for a, b in zip(lo_a, hi_a)])

    def integers(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self.random() * n) if n > 0 else 0

    def sign(self) -> float:
        return 1.0 if self.next_u64() >> 63 else -1.0


# ---------------------------------------------------------------- signals

@dataclass
class InputSignal:
    """A vector-valued signal of time.

    Kinds: ``zero``, ``expression`` (one exprlang string per component, in
    variable ``t`` plus ``params``), ``table`` (piecewise constant, value k
    holds on [times[k], times[k+1])), ``random`` (piecewise constant with
    independent uniform draws from the box per hold interval) and
    ``callable``.
    """

    kind: str
    dim: int
    fn: Callable[[float], np.ndarray] = field(repr=False, default=None)
    spec: dict = field(default_factory=dict)

    def __call__(self, t: float) -> np.ndarray:
        return self.fn(t)

    # constructors ---------------------------------------------------------
    @classmethod
    def zero(cls, dim: int) -> "InputSignal":
        z = np.zeros(dim)
        return cls("zero", dim, lambda t: z, {})

    @classmethod
    def constant(cls, values) -> "InputSignal":
        v = np.atleast_1d(np.asarray(values, dtype=float))
        return cls("constant", v.size, lambda t: v, {"values": v.tolist()})

    @classmethod
    def from_callable(cls, fn: Callable[[float], object], dim: int) -> "InputSignal":
        return cls("callable", dim, lambda t: np.atleast_1d(np.asarray(fn(t), dtype=float)), {})

    @classmethod
    def expression(cls, sources: Sequence[str] | str, params: dict | None = None) -> "InputSignal":
        if isinstance(sources, str):
            sources = [sources]
        params = dict(params or {})
        compiled = []
        for src in sources:
            tree = exprlang.parse(src)
            missing = exprlang.free_vars(tree) - {"t"} - set(params)
            if missing:
                raise exprlang.UnboundVariableError(sorted(missing)[0])
            compiled.append(exprlang.compile_expr(tree))

        def fn(t):
            env = dict(params, t=t)
            return np.array([float(c(env)) for c in compiled])
        return cls("expression", len(compiled), fn, {"expr": list(sources), "params": params})

    @classmethod
    def table(cls, times: Sequence[float], values) -> "InputSignal":
        times = [float(x) for x in times]
        vals = np.atleast_2d(np.asarray(values, dtype=float))
        if vals.shape[0] != len(times):
            vals = vals.T
        if vals.shape[0] != len(times) or not times:
            raise ConfigurationError("table signal needs one value row per time")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("table signal times must increase")

        def fn(t):
            k = bisect.bisect_right(times, t) - 1
            return vals[max(k, 0)]
        return cls("table", vals.shape[1], fn, {"times": times, "values": vals.tolist()})

    @classmethod
    def random(cls, dim: int, lo, hi, seed: int, hold: float = 1.0, t0: float = 0.0) -> "InputSignal":
        """Piecewise constant, one uniform draw per component on each hold interval.

        Interval k's value depends only on (seed, k), so evaluation order and
        truncation never change earlier values.
        """
        if hold <= 0:
            raise ConfigurationError("hold time must be positive")
        lo_a = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
        hi_a = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
        cache: dict[int, np.ndarray] = {}

        def fn(t):
            k = int(math.floor((t - t0) / hold))
            v = cache.get(k)
            if v is None:
                v = Xoshiro256(derive_seed(seed, k)).uniform(lo_a, hi_a, dim)
                cache[k] = v
            return v
        return cls("random", dim, fn, {"lo": lo_a.tolist(), "hi": hi_a.tolist(), "seed": seed, "hold": hold})

    @classmethod
    def random_sign(cls, dim: int, amplitude: float, seed: int, hold: float = 1.0) -> "InputSignal":
        """Piecewise constant with |value| = amplitude and random signs per interval."""
        cache: dict[int, np.ndarray] = {}

        def fn(t):
            k = int(math.floor(t / hold))
            v = cache.get(k)
            if v is None:
                g = Xoshiro256(derive_seed(seed, k))
                v = np.array([amplitude * g.sign() for _ in range(dim)])
                cache[k] = v
            return v
        return cls("random_sign", dim, fn, {"amplitude": amplitude, "seed": seed, "hold": hold})

    def truncated(self, t_cut: float) -> "InputSignal":
        """Same signal up to ``t_cut`` and zero afterwards."""
        z = np.zeros(self.dim)
        inner = self.fn
        return InputSignal(self.kind + "+truncated", self.dim, lambda t: inner(t) if t <= t_cut else z,
                           dict(self.spec, truncated_at=t_cut))


def as_signal(obj, dim: int) -> InputSignal:
    """Coerce None, constants, callables and signals into an ``InputSignal``."""
    if obj is None:
        return InputSignal.zero(dim)
    if isinstance(obj, InputSignal):
        return obj
    if callable(obj):
        return InputSignal.from_callable(obj, dim)
    return InputSignal.constant(obj)


# ---------------------------------------------------------------- random histories

def random_breakpoints(gen: Xoshiro256, window: float, pieces: int) -> np.ndarray:
    inner = sorted(gen.uniform(-window, 0.0) for _ in range(max(pieces - 1, 0)))
    return np.array([-window, *inner, 0.0])


def random_continuous_samples(gen: Xoshiro256, dim: int, window: float, scale: float,
                              pieces: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear data on [-window, 0]: breakpoints and values in [-scale, scale]."""
    if window == 0:
        return np.array([0.0]), gen.uniform(-scale, scale, dim)[None, :]
    th = random_breakpoints(gen, window, pieces)
    th = np.unique(th)
    vals = np.array([gen.uniform(-scale, scale, dim) for _ in th])
    return th, vals
