import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaystack.comparison import ComparisonFn, const, identity, linear
from delaystack.certify.linear_tv import LinearTvSystem
from delaystack.errors import ContractViolation, EvaluationError, ExplicitnessError, HypothesisViolation
from delaystack.history import BoundedHistory
from delaystack.scenarios import example_4_1, example_4_19, feedback_linearized, neutral_difference, riccati
from delaystack.signals import InputSignal
from delaystack.solver import (CoupledSystem, FdeSpec, advance_fde, embed_pure_fde, solve_coupled,
                               solve_subsystem_fde, solve_subsystem_rfde, step_schedule, validate_hypotheses)


def piecewise_1_8(t):
    """Hand-integrated solution of x1' = x2(t - 1/2), x2 = x1 + x2(t - 1) for x1(0) = 1, x2 = 0 before."""
    if t <= 0.5:
        return 1.0, 1.0
    return t + 0.5, t + 0.5


# ---------------------------------------------------------------- step schedule

def test_schedule_constant_delay():
    assert step_schedule(0.5, 0.0, 2.0) == [0.0, 0.5, 1.0, 1.5, 2.0]


def test_schedule_caps_at_one():
    assert step_schedule(2.0, 0.0, 2.0) == [0.0, 1.0, 2.0]


def test_schedule_shrinking_delay():
    sched = step_schedule(lambda t: 1.0 / (1.0 + t), 0.0, 1.0)
    assert sched[1] == pytest.approx(0.5, abs=1e-8)
    assert sched[2] == pytest.approx(0.9, abs=1e-8)


def test_schedule_rejects_nonpositive_delay():
    with pytest.raises(HypothesisViolation):
        step_schedule(lambda t: 0.5 - t, 0.0, 2.0)
    with pytest.raises(HypothesisViolation):
        step_schedule(0.0, 0.0, 1.0)


# ---------------------------------------------------------------- coupled solve

def test_neutral_example_matches_hand_solution():
    traj = solve_coupled(neutral_difference(0.5), 1.0, 0.0, horizon=1.0, substep=1 / 256)
    T, X1, X2, _ = traj.table()
    err = max(max(abs(X1[k, 0] - piecewise_1_8(t)[0]), abs(X2[k, 0] - piecewise_1_8(t)[1]))
              for k, t in enumerate(T) if t > 0)
    assert err < 1e-8
    assert traj.x1_at(1.0)[0] == pytest.approx(1.5, abs=1e-12)
    assert traj.x2_at(1.0)[0] == pytest.approx(1.5, abs=1e-12)
    assert traj.x2_at(0.0)[0] == 0.0
    assert traj.x2_at(0.0, right=True)[0] == 1.0
    assert traj.jump_points == [0.0]


def test_zero_data_gives_zero():
    for sys in (neutral_difference(0.5), example_4_1(), example_4_19(), feedback_linearized()):
        traj = solve_coupled(sys, 0.0, 0.0, horizon=2.0, substeps_per_step=16)
        T, X1, X2, Y = traj.table()
        assert max(np.abs(X1).max(initial=0), np.abs(X2).max(initial=0), np.abs(Y).max(initial=0)) < 1e-12


def test_blow_up_keeps_partial_trajectory():
    traj = solve_coupled(riccati(), 2.0, horizon=1.0, substeps_per_step=256, blowup_norm=1e6)
    assert traj.status == "blew_up"
    t_blow, norm = traj.blowup
    assert 0.45 < t_blow < 0.55
    assert norm > 1e6
    assert traj.x1.current_time < t_blow


def test_x2_jumps_only_at_breakpoints():
    traj = solve_coupled(example_4_1(), 1.0, 1.0, d=InputSignal.random(1, -1, 1, seed=3, hold=0.37),
                         horizon=5.0, substeps_per_step=16)
    bps = set(traj.breakpoints)
    assert set(traj.jump_points) <= bps | {traj.t0}


def test_explicitness_is_checked_and_holds():
    traj = solve_coupled(example_4_1(), 1.0, 1.0, horizon=3.0, substeps_per_step=16, check_explicitness=True)
    assert traj.explicitness_slack <= 1e-12


def test_explicitness_violation_detected():
    # claims tau = 1 but reads x2 at t - 0.25
    sys = CoupledSystem(1, 1, 0.0, 1.0, 1.0, lambda t, d, x1, x2, u: x2(-0.25), lambda t, d, x1, x2, u: x2(-1.0))
    with pytest.raises(ExplicitnessError):
        solve_coupled(sys, 1.0, 1.0, horizon=2.0, substeps_per_step=8, check_explicitness=True)


def test_tau_above_r2_rejected():
    sys = CoupledSystem(1, 1, 0.0, 1.0, 2.0, lambda t, d, x1, x2, u: 0.0, lambda t, d, x1, x2, u: x2(-1.0))
    with pytest.raises(HypothesisViolation):
        solve_coupled(sys, 0.0, 0.0, horizon=1.0)


def test_callback_failure_carries_time():
    def bad(t, d, x1, x2, u):
        if t > 0.5:
            raise RuntimeError("boom")
        return 0.0
    sys = CoupledSystem(1, 0, 0.0, 0.0, 1.0, bad, None)
    with pytest.raises(EvaluationError, match="boom"):
        solve_coupled(sys, 0.0, horizon=1.0, substeps_per_step=8)


def test_causality_under_input_truncation():
    sys = example_4_1()
    d = InputSignal.random(1, -1, 1, seed=11, hold=0.3)
    full = solve_coupled(sys, 1.0, 1.0, d=d, horizon=4.0, substeps_per_step=16)
    cut = solve_coupled(sys, 1.0, 1.0, d=d.truncated(2.0), horizon=4.0, substeps_per_step=16)
    T, X1, X2, _ = full.table()
    Tc, X1c, X2c, _ = cut.table()
    keep = T <= 2.0
    assert np.array_equal(X1[keep], X1c[keep]) and np.array_equal(X2[keep], X2c[keep])


@pytest.mark.parametrize("make, t1", [(lambda: neutral_difference(0.5), 1.5), (example_4_1, 2.0),
                                      (example_4_19, 2.0), (feedback_linearized, 3.0)])
def test_semigroup_restart(make, t1):
    sys = make()
    one = solve_coupled(sys, 1.0, 0.5, horizon=5.0, substeps_per_step=32)
    x1, x2 = one.restart_data(t1)
    two = solve_coupled(sys, x1, x2, horizon=5.0 - t1, t0=t1, substeps_per_step=32)
    for t in np.linspace(t1, 5.0, 23):
        assert np.allclose(one.x1_at(t), two.x1_at(t), atol=1e-8)
        assert np.allclose(one.x2_at(t), two.x2_at(t), atol=1e-8)


def test_convergence_order_against_exact_solution():
    from delaystack.scenarios import neutral_difference_exact
    exact = neutral_difference_exact(0.5, pieces=10)
    errs = []
    for n in (4, 8):
        traj = solve_coupled(neutral_difference(0.5), 1.0, 0.0, horizon=5.0, substeps_per_step=n)
        T, X1, _, _ = traj.table()
        errs.append(max(abs(X1[k, 0] - exact(t)[0]) for k, t in enumerate(T)))
    assert errs[0] / errs[1] >= 8


def test_bellman_form_x2_is_derivative():
    from delaystack.transforms import NeutralSpec, bellman_to_coupled
    spec = NeutralSpec("bellman", 1, 1.0, 1.0, f=lambda t, d, x, xdot, u: -0.5 * x(0.0) + 0.3 * xdot(-1.0))
    traj = solve_coupled(bellman_to_coupled(spec), 1.0, -0.5, horizon=3.0, substeps_per_step=64)
    h = 1 / 64
    for t in np.arange(1.0, 3.0, 0.25) + h / 2:
        fd = (traj.x1_at(t + h / 2) - traj.x1_at(t - h / 2)) / h
        assert abs(fd[0] - traj.x2_at(t)[0]) < 1e-4


# ---------------------------------------------------------------- difference channel

def test_advance_fde_constant_history():
    spec = FdeSpec(1, 1.0, 1.0, lambda t, d, x, u: 0.5 * x(-1.0))
    seg = advance_fde(spec, BoundedHistory.constant(1.0, 0.0, 1.0), 0.0, 0.5)
    assert np.all(seg.values == 0.5) and seg.start_value[0] == 0.5


def test_advance_fde_zero_map():
    spec = FdeSpec(1, 1.0, 1.0, lambda t, d, x, u: 0.0)
    assert np.all(advance_fde(spec, BoundedHistory.constant(3.0, 0.0, 1.0), 0.0, 1.0).values == 0.0)


def test_advance_fde_with_v2_input():
    sys = CoupledSystem.interconnection(1, 1, 0.0, 1.0, 1.0, lambda t, d, x1, v1, u: 0.0,
                                        lambda t, d, v2, x2, u: x2(-1.0) + v2,
                                        H1=lambda t, x1: x1(0.0), H2=lambda t, x2: x2(-1.0), meta={"v2_dim": 1})
    seg = advance_fde(sys, BoundedHistory.constant(0.0, 0.0, 1.0), 0.0, 1.0, v2=lambda t: t)
    assert np.allclose(seg.values[:, 0], seg.times)


def test_advance_fde_too_long_step():
    spec = FdeSpec(1, 1.0, 0.5, lambda t, d, x, u: x(-1.0))
    with pytest.raises(ContractViolation):
        advance_fde(spec, BoundedHistory.constant(1.0, 0.0, 1.0), 0.0, 0.75)


def test_subsystem_rfde_exponential():
    traj = solve_subsystem_rfde(example_4_1(), 1.0, v1=0.0, d=0.0, horizon=5.0)
    assert abs(traj.x1_at(5.0)[0] - math.exp(-5.0)) < 1e-8


def test_subsystem_rfde_zero_and_steady_state():
    assert np.all(solve_subsystem_rfde(example_4_1(), 0.0, v1=0.0, horizon=2.0).table()[1] == 0.0)
    lin = LinearTvSystem(A=-1.0, B=1.0, C=0.0, D=0.0, r=1.0, P=1.0, mu_decay=const(1.0))
    traj = solve_subsystem_rfde(lin.to_coupled(), 0.0, v1=1.0, horizon=20.0, substeps_per_step=32)
    assert traj.x1_at(20.0)[0] == pytest.approx(1.0, abs=1e-8)


def test_subsystem_fde_contraction():
    sys = example_4_1(phi=lambda t, x: x / 3)
    traj = solve_subsystem_fde(sys, 1.0, v2=0.0, d=1.0, horizon=6.0, substeps_per_step=8)
    for t in np.linspace(0.01, 6.0, 50):
        assert abs(traj.x2_at(t)[0]) <= 3.0 ** -math.floor(t / sys.r2) + 1e-15


def test_subsystem_fde_zero_and_doubling():
    spec = FdeSpec(1, 1.0, 1.0, lambda t, d, x, u: 2 * x(-1.0))
    assert np.all(solve_subsystem_fde(FdeSpec(1, 1.0, 1.0, spec.f), 0.0, horizon=3.0).x2.values == 0.0)
    traj = solve_subsystem_fde(spec, 1.0, horizon=4.0, substeps_per_step=4)
    for k in range(1, 5):
        assert traj.x2_at(float(k))[0] == 2.0 ** k
        assert traj.x2_at(k - 0.5)[0] == 2.0 ** k


def test_embedding_keeps_xi_constant_and_matches_direct():
    spec = FdeSpec(1, 1.0, 1.0, lambda t, d, x, u: 0.5 * x(-1.0))
    emb = solve_coupled(embed_pure_fde(spec), 3.0, 1.0, horizon=3.0, substeps_per_step=8)
    direct = solve_subsystem_fde(spec, 1.0, horizon=3.0, substeps_per_step=8)
    assert np.all(emb.table()[1] == 3.0)
    assert np.array_equal(emb.x2.times, direct.x2.times)
    assert np.max(np.abs(emb.x2.values - direct.x2.values)) <= 1e-12


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-2, 2))
def test_embedding_random_linear_maps(a, b, c):
    spec = FdeSpec(1, 1.0, 0.5, lambda t, d, x, u: a * x(-0.5) + b * x(-1.0) + 0.1 * math.sin(t))
    emb = solve_coupled(embed_pure_fde(spec), 0.0, c, horizon=2.0, substeps_per_step=8)
    direct = solve_subsystem_fde(spec, c, horizon=2.0, substeps_per_step=8)
    assert np.max(np.abs(emb.x2.values - direct.x2.values)) <= 1e-12


# ---------------------------------------------------------------- hypotheses

def test_validate_linear_system_with_generous_envelope():
    sys = neutral_difference(0.5)
    sys.envelope = (linear(10.0), const(1.0))
    assert validate_hypotheses(sys).passed


def test_validate_delay_bound_failure():
    sys = CoupledSystem(1, 1, 0.0, 1.0, 2.0, lambda t, d, x1, x2, u: 0.0, lambda t, d, x1, x2, u: 0.0,
                        envelope=(identity(), const(1.0)))
    rep = validate_hypotheses(sys)
    assert not rep.passed and rep.witness["condition"] == "0 < tau <= r2"


def test_validate_quadratic_growth_failure():
    sys = CoupledSystem(1, 1, 0.5, 1.0, 1.0, lambda t, d, x1, x2, u: x1(0.0) ** 2, lambda t, d, x1, x2, u: 0.0,
                        envelope=(identity(), const(1.0)))
    rep = validate_hypotheses(sys)
    assert not rep.passed
    assert rep.witness["scale"] >= 1.0


def test_csv_is_deterministic():
    d = InputSignal.random(1, -1, 1, seed=5, hold=0.5)
    a = solve_coupled(example_4_1(), 1.0, 1.0, d=d, horizon=2.0, substeps_per_step=8).to_csv()
    b = solve_coupled(example_4_1(), 1.0, 1.0, d=InputSignal.random(1, -1, 1, seed=5, hold=0.5),
                      horizon=2.0, substeps_per_step=8).to_csv()
    assert a == b
    assert a.splitlines()[0] == "t,x1_0,x2_0,Y_0,Y_1"
