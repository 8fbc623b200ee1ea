import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaystack.certify import (LinearTvSystem, LyapunovSpecFde, LyapunovSpecRfde, RazumikhinSpec,
                                build_fde_functional, certify_linear_tv, check_lyapunov_fde,
                                check_lyapunov_rfde, check_razumikhin, check_robust_equilibrium, dini_derivative,
                                generalized_derivative, lti_condition, robustness_radius, sigma_from_rho,
                                weight_phi)
from delaystack.certify.derivatives import sigma_at
from delaystack.certify.smallgain import fde_spec, rfde_spec, search_example_4_1
from delaystack.certify.wios import estimate_wios
from delaystack.comparison import ComparisonFn, const, identity, linear, power, zero
from delaystack.errors import ConfigurationError, ContractViolation, HistoryRangeError, InversionError, SpecViolation
from delaystack.history import BoundedHistory, ContinuousHistory
from delaystack.scenarios import example_4_1, example_4_19, example_4_19_linear, neutral_difference
from delaystack.solver import CoupledSystem


# ---------------------------------------------------------------- derivatives

def test_generalized_derivative_of_square():
    V = lambda t, x: float(x(0.0)[0] ** 2)
    x = ContinuousHistory.constant(1.0, 0.0, 1.0)
    assert abs(generalized_derivative(V, 0.0, x, [0.7]) - 1.4) < 1e-4


def test_generalized_derivative_state_independent():
    assert generalized_derivative(lambda t, x: 3.0, 0.0, ContinuousHistory.constant(1.0, 0.0, 1.0), [5.0]) == 0.0


def test_generalized_derivative_of_window_norm():
    x = ContinuousHistory.from_function(lambda th: 1 + th, 0.0, 1.0, deriv=lambda th: 1.0)
    V = lambda t, h: h.sup(-1.0, 0.0)
    assert generalized_derivative(V, 0.0, x, [-1.0]) == pytest.approx(0.0, abs=1e-6)
    V_now = lambda t, h: float(abs(h(0.0)[0]))
    assert generalized_derivative(V_now, 0.0, x, [-1.0]) == pytest.approx(-1.0, abs=1e-6)


def test_generalized_derivative_step_must_fit_window():
    x = ContinuousHistory.constant(1.0, 0.0, 0.001)
    with pytest.raises(HistoryRangeError):
        generalized_derivative(lambda t, h: 0.0, 0.0, x, [1.0])


@pytest.mark.parametrize("V, x, v, expected", [
    (lambda t, x: float(x[0] ** 2), [1.0], [3.0], 6.0),
    (lambda t, x: float(abs(x[0])), [0.0], [1.0], 1.0),
    (lambda t, x: float(abs(x[0])), [0.0], [-2.0], 2.0),
])
def test_dini_examples(V, x, v, expected):
    assert dini_derivative(V, 0.0, x, v) == pytest.approx(expected, abs=1e-4)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_derivative_estimates_agree_on_constant_histories(x0, v):
    pointwise = lambda t, x: math.sin(x[0]) + x[0] ** 2
    functional = lambda t, h: pointwise(t, h(0.0))
    hist = ContinuousHistory.constant(x0, 0.0, 1.0)
    a = dini_derivative(pointwise, 0.0, [x0], [v])
    b = generalized_derivative(functional, 0.0, hist, [v])
    assert abs(a - b) < 1e-6


def test_sigma_exponential_and_separable():
    t, s = sigma_from_rho(linear(0.7), 2.0, 3.0, 0.01)
    assert np.max(np.abs(s - 2.0 * np.exp(-0.7 * t))) < 1e-9
    assert sigma_at(power(2.0), 1.0, 1.0) == pytest.approx(0.5, abs=1e-8)
    assert np.all(sigma_from_rho(power(2.0), 0.0, 1.0, 0.1)[1] == 0.0)


def test_sigma_negative_rate_rejected():
    with pytest.raises(SpecViolation):
        sigma_from_rho(ComparisonFn(lambda s: -np.asarray(s), "N"), 1.0, 1.0, 0.1)


@given(st.floats(0, 10), st.floats(0.01, 3))
def test_sigma_starts_at_s_and_decreases(s0, k):
    _, s = sigma_from_rho(linear(k), s0, 2.0, 0.05)
    assert s[0] == s0
    assert np.all(np.diff(s) <= 0)


# ---------------------------------------------------------------- Lyapunov checks

def test_rfde_example_passes():
    sys = example_4_1(1.0, 3.0, 0.5)
    rep = check_lyapunov_rfde(rfde_spec(1.0, 3.0, 2.0), sys, n_samples=1000, seed=0)
    assert rep.passed
    assert rep.resolution["active"] > 0


def test_rfde_vacuous_zero_functional():
    spec = LyapunovSpecRfde(V=lambda t, x: 0.0, a2=power(2.0), rho=zero())
    assert check_lyapunov_rfde(spec, example_4_1(), n_samples=100).passed


def test_rfde_claimed_decay_too_fast():
    spec = rfde_spec(1.0, 3.0, 2.0)
    spec.rho = linear(10.0)
    rep = check_lyapunov_rfde(spec, example_4_1(), n_samples=200)
    assert not rep.passed and rep.witness["condition"] == "decay"


def scalar_rfde(f):
    return CoupledSystem(1, 0, 1.0, 0.0, 1.0, f, None)


def test_razumikhin_examples():
    spec = RazumikhinSpec(V=lambda t, x: float(x[0] ** 2), a=linear(0.9), a2=power(2.0), rho=linear(0.1))
    assert check_razumikhin(spec, scalar_rfde(lambda t, d, x, _, u: -x(0.0)), n_samples=300).passed
    with pytest.raises(SpecViolation):
        check_razumikhin(RazumikhinSpec(V=spec.V, a=identity(), a2=power(2.0)), scalar_rfde(lambda *a: 0.0))
    rep = check_razumikhin(spec, scalar_rfde(lambda t, d, x, _, u: x(-1.0)), n_samples=300)
    assert not rep.passed


def test_fde_functional_examples():
    spec = LyapunovSpecFde(W=lambda t, x: float(abs(x[0])), lam=0.5, mu_exp=math.log(2.0), r2=1.0)
    V = build_fde_functional(spec)
    assert V(0.0, BoundedHistory.constant(1.0, 0.0, 1.0)) == 1.0
    oldest = BoundedHistory([-1.0, -1.0, 0.0], [1.0, 0.0, 0.0], window=1.0)
    assert V(0.0, oldest) == pytest.approx(0.5)
    assert V(0.0, BoundedHistory.constant(0.0, 0.0, 1.0)) == 0.0


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=10), st.floats(1.0, 3.0))
def test_fde_functional_monotone(vals, scale):
    spec = LyapunovSpecFde(W=lambda t, x: float(abs(x[0])), lam=0.5, mu_exp=0.3, r2=1.0)
    V = build_fde_functional(spec)
    T = np.linspace(-1, 0, len(vals))
    assert V(0.0, BoundedHistory(T, np.array(vals) * scale, 1.0)) >= V(0.0, BoundedHistory(T, vals, 1.0)) - 1e-15


def test_fde_spec_invariants():
    with pytest.raises(ConfigurationError):
        LyapunovSpecFde(W=lambda t, x: 0.0, lam=1.0, mu_exp=0.0, r2=1.0)
    with pytest.raises(ConfigurationError):
        LyapunovSpecFde(W=lambda t, x: 0.0, lam=0.5, mu_exp=1.0, r2=1.0)


def test_fde_example_contraction_passes():
    sys = example_4_1(1.0, 3.0, 0.5)
    spec = fde_spec(1.0, 3.0, 0.5, sys.r2)
    assert spec.lam == 0.5
    rep = check_lyapunov_fde(spec, sys, n_samples=1000, seed=1, decay_samples=50)
    assert rep.passed
    assert rep.details["checked"]["contraction"] == 1000


def pure_fde(f):
    return CoupledSystem(0, 1, 0.0, 1.0, 1.0, None, f)


def test_fde_zero_map_and_identity_map():
    spec = LyapunovSpecFde(W=lambda t, x: float(abs(x[0])), lam=0.3, mu_exp=0.0, r2=1.0)
    assert check_lyapunov_fde(spec, pure_fde(lambda t, d, x1, x2, u: 0.0), n_samples=100).passed
    rep = check_lyapunov_fde(spec, pure_fde(lambda t, d, x1, x2, u: x2(-1.0)), n_samples=100)
    assert not rep.passed and rep.witness["condition"] == "contraction"


def test_fde_step_beyond_bound():
    spec = LyapunovSpecFde(W=lambda t, x: float(abs(x[0])), lam=0.3, mu_exp=0.0, r2=1.0)
    with pytest.raises(ContractViolation):
        check_lyapunov_fde(spec, pure_fde(lambda t, d, x1, x2, u: 0.0), n_samples=3, h_grid=[1.5])


# ---------------------------------------------------------------- small gain search

def test_example_4_1_search_threshold():
    assert search_example_4_1(1.0, 3.0).passed
    assert not search_example_4_1(1.0, 1.5).passed
    rep = search_example_4_1(1.0, 3.0)
    assert rep.parameters["e1"] < rep.parameters["e2"]


# ---------------------------------------------------------------- robustness radius

def test_radius_identity_case():
    assert robustness_radius(identity(), const(1.0), 0.0, 1.0, 0.0) == pytest.approx(math.exp(-1) / 36, abs=1e-12)


def test_radius_square_case():
    assert robustness_radius(power(2.0), const(1.0), 0.0, 9.0, 0.0) == pytest.approx(math.sqrt(math.exp(-1) / 4),
                                                                                     abs=1e-12)


def test_radius_linear_in_eps_for_identity():
    a = robustness_radius(identity(), const(1.0), 0.0, 1.0, 2.0)
    b = robustness_radius(identity(), const(1.0), 0.0, 9.0, 2.0)
    assert b == pytest.approx(9 * a, rel=1e-12)


def test_radius_inversion_failure():
    bounded = ComparisonFn(lambda s: np.asarray(s) / (1 + np.asarray(s)), "K")
    with pytest.raises(InversionError):
        robustness_radius(bounded, const(1.0), 0.0, 100.0, 0.0)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0, 3), st.floats(0, 3))
def test_radius_monotonicity(e1, e2, L1, L2):
    a = power(1.5)
    lo, hi = sorted((e1, e2))
    assert robustness_radius(a, const(1.0), L1, lo, 1.0) <= robustness_radius(a, const(1.0), L1, hi, 1.0) + 1e-15
    Llo, Lhi = sorted((L1, L2))
    assert robustness_radius(a, const(1.0), Lhi, lo, 1.0) <= robustness_radius(a, const(1.0), Llo, lo, 1.0) + 1e-15


def test_robust_equilibrium_on_neutral_example():
    rep = check_robust_equilibrium(neutral_difference(0.5), 1.0, 1.0, 0.5, n_trials=20, seed=0)
    assert rep.passed
    assert rep.details["worst_sup"] < 1.0


def test_robust_equilibrium_growth_with_horizon():
    sys = CoupledSystem(1, 0, 0.0, 0.0, 1.0, lambda t, d, x, _, u: x(0.0), None, envelope=(identity(), const(1.0)))
    short = check_robust_equilibrium(sys, 1.0, 1.0, 0.5, n_trials=5)
    long = check_robust_equilibrium(sys, 1.0, 1.0, 2.0, n_trials=5)
    assert short.passed
    assert long.details["worst_sup"] > short.details["worst_sup"]


# ---------------------------------------------------------------- linear time-varying certificate

def test_phi_closed_form():
    for t in (0.0, 1.0, 2.5):
        assert weight_phi(0.5, const(2.0), 1.0, t) == pytest.approx(0.25 ** (t + 1), abs=1e-12)
    assert weight_phi(0.4, const(0.4), 1.0, 3.0) == pytest.approx(1.0, abs=1e-14)


def test_phi_recursion_constant_c():
    for t in (0.3, 1.0, 4.2):
        lhs = weight_phi(0.6, const(1.5), 0.8, t)
        rhs = 0.6 / 1.5 * weight_phi(0.6, const(1.5), 0.8, t - 0.8)
        assert abs(lhs - rhs) < 1e-10


def test_phi_rejects_nonpositive_c():
    from delaystack.certify import DomainError
    with pytest.raises(DomainError):
        weight_phi(0.5, ComparisonFn(lambda s: 1.0 - np.asarray(s), "N"), 1.0, 2.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.5, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 5.0))
def test_phi_recursion_inequality_for_nondecreasing_c(eta, r, k, t):
    c = ComparisonFn(lambda s: eta + k * np.asarray(s) / (1 + np.asarray(s)) + 0.1, "K_plus")
    lhs = weight_phi(eta, c, r, t)
    rhs = eta / float(c(t)) * weight_phi(eta, c, r, t - r)
    assert lhs <= rhs + 1e-10


def test_linear_tv_examples():
    assert certify_linear_tv(example_4_19_linear(1.0, 0.2)).passed
    assert not certify_linear_tv(example_4_19_linear(0.5, 0.2)).passed
    assert not certify_linear_tv(example_4_19_linear(1.0, 0.5)).passed


def test_linear_tv_reference_eta():
    rep = certify_linear_tv(example_4_19_linear(1.0, 0.2), eta_search_grid=[0.75])
    assert rep.passed


def test_linear_tv_margin_changes_sign_once():
    bs = np.round(np.arange(0.1, 0.5 + 1e-9, 0.02), 2)
    margins = [certify_linear_tv(example_4_19_linear(1.0, b)).margin for b in bs]
    signs = np.sign(margins)
    assert signs[0] > 0 and signs[-1] < 0
    assert np.count_nonzero(np.diff(signs)) == 1


def test_linear_tv_p_below_identity():
    from delaystack.errors import HypothesisViolation
    sys = LinearTvSystem(A=-1.0, B=0.1, C=1.0, D=0.1, r=1.0, P=0.5, mu_decay=const(0.5))
    with pytest.raises(HypothesisViolation):
        certify_linear_tv(sys)


def test_lti_example_and_embedded_report():
    assert lti_condition(0.5, 1.0, 0.5, 1.0, 2.0).margin == pytest.approx(0.5)
    sys = LinearTvSystem(A=-2.0, B=0.5, C=1.0, D=0.5, r=1.0, P=1.0, mu_decay=const(2.0), constant=True)
    rep = certify_linear_tv(sys)
    assert rep.details["lti_condition"]["pass"] is True


# ---------------------------------------------------------------- WIOS

def first_order_lag():
    return CoupledSystem(1, 0, 0.0, 0.0, 1.0, lambda t, d, x, _, u: -x(0.0) + u, None,
                         H=lambda t, x1, x2: x1(0.0), m=1)


def test_wios_gain_of_first_order_lag():
    est = estimate_wios(first_order_lag(), [0.5, 1.0, 2.0], n_trials=2, horizon=20.0, substeps_per_step=16)
    for amp, g in zip(est.amplitudes, est.gain_curve):
        assert abs(g - amp) <= 0.1 * max(amp, 1e-12)
    assert est.gain_csv().splitlines()[0] == "amplitude,gain"


def test_wios_zero_data_zero_input():
    est = estimate_wios(first_order_lag(), [], n_trials=1, horizon=5.0, size_bins=[0.0], substeps_per_step=8)
    assert np.all(est.sigma_table == 0.0) and np.all(est.gain_curve == 0.0)


def test_wios_envelopes_are_monotone():
    est = estimate_wios(example_4_1(), [], n_trials=2, horizon=6.0, size_bins=[0.5, 1.0], substeps_per_step=8)
    assert np.all(np.diff(est.sigma_table, axis=1) <= 0)


def test_wios_output_decay_for_linear_tv_example():
    est = estimate_wios(example_4_19(), [], n_trials=1, horizon=10.0, size_bins=[0.1], substep=1 / 8192)
    assert not est.blowups
    assert est.sigma_table[0, -1] < 1e-3


def test_wios_blown_up_bin_is_infinite():
    escape = CoupledSystem(1, 0, 0.0, 0.0, 1.0, lambda t, d, x, _, u: x(0.0) ** 3, None,
                           H=lambda t, x1, x2: x1(0.0))
    est = estimate_wios(escape, [], n_trials=1, horizon=3.0, size_bins=[2.0], substeps_per_step=32)
    assert est.blowups and np.all(np.isinf(est.sigma_table[0]))
