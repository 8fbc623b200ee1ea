"""Output-stability certificate for linear time-varying coupled systems.

The system is

    x1'(t) = A(t) x1(t) + B(t) x2(t - r) + G1(t) u(t)
    x2(t)  = C(t) x1(t) + D(t) x2(t - r) + G2(t) u(t)

with output x1.  Given P(t) >= I and a rate mu(t) with
P' + PA + A'P <= -2 mu P, and a non-decreasing bound c(t) >= max(|D(t)|, eta),
the weight

    phi(t) = exp(-(1/r) * integral_{-r}^{t} log(c(s + r) / eta) ds)

turns the difference channel into a contraction.  The certificate then asks
that q(t) = |B| sqrt|P| / (mu(t) phi(t - r)) stay bounded and that
sup_t q(t) * max_{tau <= t} phi(tau)|C(tau)| < 1 - eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..comparison import ComparisonFn, const
from ..errors import ConfigurationError, DelayStackError, HypothesisViolation
from ..history import _simpson
from ..report import CertificateReport
from ..solver import CoupledSystem

MatrixFn = Callable[[float], np.ndarray]


class DomainError(DelayStackError, ValueError):
    """A function left the domain where an operation is defined."""


def as_matrix_fn(m) -> MatrixFn:
    """Constants (scalars or nested lists) become constant callbacks returning 2-d arrays."""
    if callable(m):
        return lambda t: np.atleast_2d(np.asarray(m(t), dtype=float))
    arr = np.atleast_2d(np.asarray(m, dtype=float))
    return lambda t: arr


@dataclass
class LinearTvSystem:
    A: MatrixFn
    B: MatrixFn
    C: MatrixFn
    D: MatrixFn
    r: float
    P: MatrixFn
    mu_decay: ComparisonFn
    G1: MatrixFn | None = None
    G2: MatrixFn | None = None
    eta: float | None = None
    c_bound: ComparisonFn | None = None
    eps1: float | None = None
    eps2: float | None = None
    eps3: float | None = None
    constant: bool = False
    name: str = "linear_tv"

    def __post_init__(self):
        for k in ("A", "B", "C", "D", "P", "G1", "G2"):
            v = getattr(self, k)
            if v is not None:
                setattr(self, k, as_matrix_fn(v))
        if self.r <= 0:
            raise ConfigurationError("delay r must be positive")
        if self.eta is not None and not 0 < self.eta < 1:
            raise ConfigurationError("eta must lie in (0, 1)")
        if self.eps3 is not None and not 0 < self.eps3 < 1:
            raise ConfigurationError("eps3 must lie in (0, 1)")
        if None not in (self.eta, self.eps1, self.eps2) and \
                (1 + self.eps1) * (1 + self.eps2) * self.eta >= 1:
            raise ConfigurationError("need (1 + eps1)(1 + eps2) eta < 1")

    @property
    def n1(self) -> int:
        return self.A(0.0).shape[0]

    @property
    def n2(self) -> int:
        return self.D(0.0).shape[0]

    @property
    def m(self) -> int:
        if self.G1 is not None:
            return self.G1(0.0).shape[1]
        if self.G2 is not None:
            return self.G2(0.0).shape[1]
        return 0

    def to_coupled(self) -> CoupledSystem:
        """Coupled form with feedback channels v1 = x2(t - r), v2 = x1(t) and output x1(t)."""
        A, B, C, D, G1, G2, r = self.A, self.B, self.C, self.D, self.G1, self.G2, self.r
        m = self.m

        def drive(G, t, u):
            return G(t) @ u if (G is not None and m) else 0.0

        def f1_sub(t, d, x1, v1, u):
            return A(t) @ x1(0.0) + B(t) @ np.atleast_1d(v1) + drive(G1, t, u)

        def f2_sub(t, d, v2, x2, u):
            return C(t) @ np.atleast_1d(v2) + D(t) @ x2(-r) + drive(G2, t, u)

        return CoupledSystem.interconnection(
            self.n1, self.n2, r, r, r, f1_sub, f2_sub,
            H1=lambda t, x1: x1(0.0), H2=lambda t, x2: x2(-r),
            H=lambda t, x1, x2: x1(0.0), m=m, name=self.name,
            meta={"v1_dim": self.n2, "v2_dim": self.n1})


def _norm2(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2))


# ---------------------------------------------------------------- the weight

def weight_phi(eta: float, c_bound: ComparisonFn | Callable, r: float, t: float, panels: int = 2048) -> float:
    """``exp(-(1/r) * integral_{-r}^{t} log(c(s + r) / eta) ds)`` by composite Simpson."""
    if not 0 < eta < 1:
        raise ConfigurationError("eta must lie in (0, 1)")
    if r <= 0:
        raise ConfigurationError("r must be positive")
    if t < -r:
        raise ConfigurationError(f"phi is defined on [-r, inf); got t={t!r}")
    if t == -r:
        return 1.0
    panels += panels % 2
    s = np.linspace(-r, t, panels + 1)
    c = np.asarray(c_bound(s + r), dtype=float)
    c = np.broadcast_to(c, s.shape)
    if np.any(~(c > 0)):
        k = int(np.argmax(~(c > 0)))
        raise DomainError(f"c({float(s[k] + r)!r}) = {float(c[k])!r} is not positive")
    integral = float(_simpson(np.log(c / eta)[:, None], (t + r) / panels)[0])
    return math.exp(-integral / r)


def _log_c_integral(log_c: Callable[[np.ndarray], np.ndarray], upper: np.ndarray, fine: int = 4) -> np.ndarray:
    """``integral_0^{u} log c`` for sorted ``upper`` values by Simpson on each gap (``2 * fine`` panels each)."""
    edges = np.concatenate(([0.0], np.maximum.accumulate(upper)))
    a, b = edges[:-1], edges[1:]
    frac = np.linspace(0.0, 1.0, 2 * fine + 1)
    pts = a[:, None] + (b - a)[:, None] * frac[None, :]
    vals = log_c(pts.ravel()).reshape(pts.shape)
    w = np.ones(frac.size)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    pieces = (vals @ w) * (b - a) / (3.0 * 2 * fine)
    return np.cumsum(pieces)


# ---------------------------------------------------------------- the certificate

def lti_condition(B, C, D, P, mu: float) -> CertificateReport:
    """Constant-matrix form: |C| |B| sqrt|P| < mu (1 - |D|)."""
    B, C, D, P = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (B, C, D, P))
    lhs = _norm2(C) * _norm2(B) * math.sqrt(_norm2(P))
    rhs = mu * (1.0 - _norm2(D))
    margin = rhs - lhs
    return CertificateReport("lti_condition", margin > 0, margin,
                             None if margin > 0 else {"lhs": lhs, "rhs": rhs}, {"exact": True},
                             {"mu": mu}, {"lhs": lhs, "rhs": rhs})


@dataclass
class _EtaResult:
    eta: float
    structural: bool
    margin: float
    margin_exact: float
    parts: dict = field(default_factory=dict)
    witness: dict | None = None

    @property
    def passed(self) -> bool:
        return self.structural and self.margin > 0


class _Precomputed:
    """Per-grid quantities that do not depend on eta."""

    def __init__(self, sys: LinearTvSystem, t_grid: np.ndarray, fd_step: float):
        self.t = t_grid
        r = sys.r
        self.B = np.array([_norm2(sys.B(t)) for t in t_grid])
        self.C = np.array([_norm2(sys.C(t)) for t in t_grid])
        self.D = np.array([_norm2(sys.D(t)) for t in t_grid])
        self.Pn = np.array([_norm2(sys.P(t)) for t in t_grid])
        self.mu = np.asarray(sys.mu_decay(t_grid), dtype=float) * np.ones_like(t_grid)
        self.residual = []
        self.p_min = []
        for t, mu in zip(t_grid, self.mu):
            P = sys.P(t)
            A = sys.A(t)
            h = fd_step * max(1.0, abs(t))
            lo = max(t - h, 0.0)
            dP = (sys.P(t + h) - sys.P(lo)) / (t + h - lo)
            M = -(dP + P @ A + A.T @ P + 2.0 * mu * P)
            M = 0.5 * (M + M.T)
            scale = max(_norm2(dP), _norm2(P @ A), 2 * mu * _norm2(P), 1.0)
            self.residual.append((float(np.linalg.eigvalsh(M).min()), scale))
            self.p_min.append(float(np.linalg.eigvalsh(0.5 * (P + P.T)).min()))
        # c on [0, T + r] needs |D| there; sample the shifted grid as well
        upper = np.concatenate((t_grid, t_grid + r))
        self.upper = np.unique(upper)
        self.D_upper = np.array([_norm2(sys.D(u)) for u in self.upper])


def _phi_tables(sys: LinearTvSystem, pre: _Precomputed, eta: float):
    """phi at grid times and at grid times minus r, plus the bound c used."""
    r = sys.r
    if sys.c_bound is not None:
        c_fn = sys.c_bound
    else:
        run_max_u = np.maximum.accumulate(pre.D_upper)

        def c_fn(s):
            s = np.asarray(s, dtype=float)
            idx = np.clip(np.searchsorted(pre.upper, s, side="right") - 1, 0, pre.upper.size - 1)
            return np.maximum(eta, run_max_u[idx])

    def log_c(s):
        c = np.broadcast_to(np.asarray(c_fn(s), dtype=float), np.shape(s))
        if np.any(~(c > 0)):
            raise DomainError("c must be positive")
        return np.log(c / eta)

    # phi(t) = exp(-(1/r) * integral_0^{t+r} log(c(u)/eta) du)
    uppers = np.concatenate((pre.t + r, pre.t))
    order = np.argsort(uppers, kind="stable")
    vals = np.empty_like(uppers)
    vals[order] = _log_c_integral(log_c, np.maximum(uppers[order], 0.0))
    n = pre.t.size
    phi_t = np.exp(-vals[:n] / r)
    phi_tm = np.exp(-vals[n:] / r)  # phi(t - r)
    c_t = np.broadcast_to(np.asarray(c_fn(pre.t), dtype=float), pre.t.shape)
    return phi_t, phi_tm, c_t


def _eval_eta(sys: LinearTvSystem, pre: _Precomputed, eta: float, mode: str) -> _EtaResult:
    t = pre.t
    phi_t, phi_tm, c_t = _phi_tables(sys, pre, eta)
    parts: dict = {}
    witness = None
    # c >= max(|D|, eta)
    slack_c = c_t - np.maximum(pre.D, eta)
    k = int(np.argmin(slack_c))
    parts["c_bound"] = float(slack_c[k])
    ok_c = slack_c[k] >= -1e-12
    if not ok_c:
        witness = {"condition": "c >= max(|D|, eta)", "t": float(t[k])}
    # Lyapunov matrix inequality
    res = np.array([m + 1e-9 * s for m, s in pre.residual])
    k = int(np.argmin(res))
    parts["matrix_inequality"] = float(pre.residual[k][0])
    ok_m = res[k] >= 0
    if not ok_m and witness is None:
        witness = {"condition": "P' + PA + A'P + 2 mu P <= 0", "t": float(t[k]),
                   "min_eigenvalue": pre.residual[k][0]}
    # boundedness of q on the grid
    q = pre.B * np.sqrt(pre.Pn) / (pre.mu * phi_tm)
    half = t.size // 2
    first, second = float(np.max(q[: max(half, 1)])), float(np.max(q[half:]))
    ok_b = bool(np.isfinite(second)) and second <= first * (1 + 1e-9) + 1e-300
    parts["q_first_half_max"], parts["q_second_half_max"] = first, second
    if not ok_b and witness is None:
        witness = {"condition": "q bounded", "first_half_max": first, "second_half_max": second}
    # small-gain inequality
    w = phi_t * pre.C
    exact_prefix = np.maximum.accumulate(w)
    cons_prefix = np.maximum(exact_prefix, 1.0 * _norm2(sys.C(0.0)))  # phi(-r) = 1
    if mode == "conservative":
        # prefix over [-r, t]: C is taken constant on [-r, 0] at its value at 0
        prefix = cons_prefix
    elif mode == "exact":
        prefix = exact_prefix
    else:
        raise ConfigurationError("mode must be 'conservative' or 'exact'")
    lhs = q * prefix
    k = int(np.argmax(lhs))
    margin = (1.0 - eta) - float(lhs[k])
    margin_exact = (1.0 - eta) - float(np.max(q * exact_prefix))
    parts["gain_sup"] = float(lhs[k])
    if margin <= 0 and witness is None:
        witness = {"condition": "sup q * prefix(phi |C|) < 1 - eta", "t": float(t[k]), "value": float(lhs[k])}
    return _EtaResult(eta, bool(ok_c and ok_m and ok_b), margin, margin_exact, parts, witness)


def default_t_grid(r: float) -> np.ndarray:
    return np.linspace(0.0, 20.0 * max(r, 1.0), 2001)


def default_eta_grid() -> np.ndarray:
    return np.linspace(0.0, 1.0, 18)[1:-1]


def certify_linear_tv(sys: LinearTvSystem, t_grid: Sequence[float] | None = None,
                      eta_search_grid: Sequence[float] | None = None, mode: str = "conservative",
                      refine: int = 48, fd_step: float = 1e-5) -> CertificateReport:
    """Search eta for the weighted small-gain certificate of a linear time-varying system.

    ``mode="conservative"`` takes the running max of phi|C| from -r (where
    phi = 1); ``mode="exact"`` starts it at 0.  Both margins are reported.
    The best grid eta is refined by bisection against a neighbour where the
    structural conditions (bound on c, matrix inequality, boundedness of q)
    fail.
    """
    t = default_t_grid(sys.r) if t_grid is None else np.asarray(t_grid, dtype=float)
    if sys.eta is not None and eta_search_grid is None:
        etas = np.array([sys.eta])
    else:
        etas = default_eta_grid() if eta_search_grid is None else np.asarray(eta_search_grid, dtype=float)
    if t.size == 0 or etas.size == 0:
        raise ConfigurationError("t_grid and eta_search_grid must be non-empty")
    if np.any((etas <= 0) | (etas >= 1)):
        raise ConfigurationError("eta values must lie in (0, 1)")
    t = np.unique(t)
    pre = _Precomputed(sys, t, fd_step)
    bad = np.flatnonzero(np.asarray(pre.p_min) < 1.0 - 1e-9)
    if bad.size:
        k = int(bad[0])
        raise HypothesisViolation(f"P(t) >= I fails at t={float(t[k])!r} (min eigenvalue {pre.p_min[k]!r})")

    results = [_eval_eta(sys, pre, float(e), mode) for e in etas]
    score = [(r.structural, r.margin) for r in results]
    ib = max(range(len(results)), key=lambda i: score[i])
    best = results[ib]
    refined = False
    if best.structural:
        for j in (ib - 1, ib + 1):
            if 0 <= j < len(results) and not results[j].structural:
                good, badv = best.eta, results[j].eta
                cand = None
                for _ in range(refine):
                    mid = 0.5 * (good + badv)
                    res = _eval_eta(sys, pre, mid, mode)
                    if res.structural:
                        good, cand = mid, res
                    else:
                        badv = mid
                if cand is not None and cand.margin > best.margin:
                    best, refined = cand, True

    details = {"best_eta": best.eta, "margin_conservative_or_selected": best.margin,
               "margin_exact": best.margin_exact, "parts": best.parts, "refined": refined,
               "per_eta": [{"eta": r.eta, "structural": r.structural, "margin": r.margin} for r in results]}
    reports = CertificateReport(
        "linear_tv", best.passed, best.margin, None if best.passed else best.witness,
        {"t_points": int(t.size), "t_max": float(t[-1]), "eta_points": int(etas.size), "refine_steps": refine,
         "fd_step": fd_step, "matrix_tol": 1e-9},
        {"r": sys.r, "mode": mode, "eta": best.eta}, details)
    if sys.constant:
        mu0 = float(sys.mu_decay(0.0))
        lti = lti_condition(sys.B(0.0), sys.C(0.0), sys.D(0.0), sys.P(0.0), mu0)
        reports.details["lti_condition"] = lti.to_dict()
    return reports
