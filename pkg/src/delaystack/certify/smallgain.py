"""Small-gain certificate for the disturbed neutral example x' = -a x + d phi(t, x'(t - 2r)).

Subsystem gains with free parameters e1 > 1 and e2 in (0, c - 1):
    x1 channel: gamma1(s) = e1 s / (a c)
    x2 channel: gamma2(s) = c a s / e2
so the loop gain is e1 / e2, and some admissible pair exists iff c > 2.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..comparison import ComparisonFn, const, linear, linear_gain_condition, zero
from ..errors import ConfigurationError
from ..report import CertificateReport
from ..solver import CoupledSystem
from .lyapunov import LyapunovSpecFde, LyapunovSpecRfde, check_lyapunov_fde, check_lyapunov_rfde


def gain_pair(a: float, c: float, e1: float, e2: float) -> tuple[float, float]:
    return e1 / (a * c), c * a / e2


def rfde_spec(a: float, c: float, e1: float) -> LyapunovSpecRfde:
    """V = x1(0)^2 / 2 with threshold e1^2 s^2 / (2 a^2 c^2) and decay 2 a (1 - 1/e1) s."""
    half_sq = ComparisonFn(lambda s: 0.5 * np.square(s), "K_inf", name="s^2/2")
    return LyapunovSpecRfde(
        V=lambda t, x: 0.5 * float(np.dot(x(0.0), x(0.0))),
        a2=half_sq, a1=half_sq, p=half_sq, mu=const(1.0), R=0.0,
        zeta=ComparisonFn(lambda s: e1 ** 2 / (2 * a ** 2 * c ** 2) * np.square(s), "N", name="zeta1"),
        zeta_u=zero(), rho=linear(2 * a * (1 - 1 / e1)))


def fde_spec(a: float, c: float, e2: float, r2: float) -> LyapunovSpecFde:
    """W = |x2| with contraction (1 + e2)/c and threshold (1 + 1/e2) a s."""
    lam = (1 + e2) / c
    return LyapunovSpecFde(
        W=lambda t, x: float(np.linalg.norm(x)), lam=lam, mu_exp=-np.log(lam) / r2 if lam > 0 else 1.0, r2=r2,
        zeta=linear((1 + 1 / e2) * a), zeta_u=zero(),
        a1_tilde=ComparisonFn(lambda s: s, "K_inf", name="s"), a2_tilde=ComparisonFn(lambda s: s, "K_inf", name="s"),
        p=ComparisonFn(lambda s: s, "K_inf", name="s"), mu_w=const(1.0))


def search_example_4_1(a: float, c: float, e1_grid: Sequence[float] | None = None,
                       e2_grid: Sequence[float] | None = None, t_grid: Sequence[float] | None = None) -> CertificateReport:
    """Grid search over (e1, e2) for a loop gain below one; reports the best pair."""
    if a <= 0 or c <= 1:
        raise ConfigurationError("need a > 0 and c > 1")
    e1s = np.linspace(1.0, c, 18)[1:-1] if e1_grid is None else np.asarray(e1_grid, dtype=float)
    e2s = np.linspace(0.0, c - 1.0, 18)[1:-1] if e2_grid is None else np.asarray(e2_grid, dtype=float)
    if np.any(e1s <= 1) or np.any(e2s <= 0) or np.any(e2s >= c - 1):
        raise ConfigurationError("need e1 > 1 and 0 < e2 < c - 1")
    one = const(1.0)
    best = None
    for e1 in e1s:
        for e2 in e2s:
            K1, K2 = gain_pair(a, c, float(e1), float(e2))
            rep = linear_gain_condition(K1, K2, one, one, t_grid)
            if best is None or rep.margin > best[0].margin:
                best = (rep, float(e1), float(e2))
    rep, e1, e2 = best
    return CertificateReport(
        "example_4_1_small_gain", rep.passed, rep.margin,
        None if rep.passed else {"best_e1": e1, "best_e2": e2, "loop_gain": e1 / e2},
        {"e1_points": int(e1s.size), "e2_points": int(e2s.size), **rep.resolution},
        {"a": a, "c": c, "e1": e1, "e2": e2},
        {"loop_gain": e1 / e2, "gamma1_slope": e1 / (a * c), "gamma2_slope": c * a / e2,
         "closed_form_condition": "c > 2", "closed_form_holds": c > 2})


def certify_example_4_1(sys: CoupledSystem, n_samples: int = 1000, seed: int = 0) -> CertificateReport:
    """Gain search plus the two Lyapunov checks at the selected parameters."""
    a, c, r = sys.meta["a"], sys.meta["c"], sys.meta["r"]
    gain = search_example_4_1(a, c)
    e1 = gain.parameters["e1"]
    e2 = gain.parameters["e2"]
    parts = [gain]
    if 0 < e2 < c - 1:
        parts.append(check_lyapunov_rfde(rfde_spec(a, c, e1), sys, n_samples=n_samples, seed=seed))
        parts.append(check_lyapunov_fde(fde_spec(a, c, e2, sys.r2), sys, n_samples=n_samples, seed=seed + 1))
    worst = min(parts, key=lambda p: p.margin)
    failing = next((p for p in parts if not p.passed), None)
    return CertificateReport(
        "example_4_1", failing is None, worst.margin,
        None if failing is None else {"check": failing.check, **(failing.witness or {})},
        {"parts": len(parts), "n_samples": n_samples},
        {"a": a, "c": c, "r": r, "e1": e1, "e2": e2},
        {"parts": [p.to_dict() for p in parts]})
