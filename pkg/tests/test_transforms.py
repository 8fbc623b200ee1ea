import math

import numpy as np
import pytest

from delaystack.errors import ConfigurationError, HypothesisViolation
from delaystack.scenarios import example_4_1, neutral_difference
from delaystack.solver import solve_coupled
from delaystack.transforms import (NeutralSpec, TransportPdeSpec, bellman_to_coupled,
                                   characteristic_boundary_value, check_matching, hale_to_coupled,
                                   pde_to_coupled)


def hale_1_8(r=0.5):
    return NeutralSpec("hale", 1, 2 * r, r, f=lambda t, d, x, u: x(-r), g=lambda t, x: x(-2 * r))


def test_hale_form_reproduces_hand_built_system():
    a = solve_coupled(hale_to_coupled(hale_1_8()), 1.0, 0.0, horizon=3.0, substeps_per_step=64)
    b = solve_coupled(neutral_difference(0.5), 1.0, 0.0, horizon=3.0, substeps_per_step=64)
    for t in np.linspace(0, 3, 61):
        assert abs(a.x1_at(t)[0] - b.x1_at(t)[0]) < 1e-10
        assert abs(a.x2_at(t)[0] - b.x2_at(t)[0]) < 1e-10


def test_hale_zero_operator_is_plain_delay_equation():
    spec = NeutralSpec("hale", 1, 1.0, 1.0, f=lambda t, d, x, u: -x(0.0), g=lambda t, x: np.zeros(1))
    traj = solve_coupled(hale_to_coupled(spec), 1.0, 1.0, horizon=2.0, substeps_per_step=128)
    for t in (0.25, 1.0, 2.0):
        assert traj.x1_at(t)[0] == pytest.approx(math.exp(-t), abs=1e-9)
        assert traj.x2_at(t)[0] == pytest.approx(traj.x1_at(t)[0], abs=1e-12)


def test_hale_affine_recursion_converges_to_twice_x1():
    spec = NeutralSpec("hale", 1, 1.0, 1.0, f=lambda t, d, x, u: 0.0, g=lambda t, x: 0.5 * x(-1.0))
    traj = solve_coupled(hale_to_coupled(spec), 1.0, 0.0, horizon=40.0, substeps_per_step=4)
    assert traj.x1_at(40.0)[0] == 1.0
    assert traj.x2_at(40.0)[0] == pytest.approx(2.0, abs=1e-10)


def test_hale_rejects_increasing_delay():
    spec = NeutralSpec("hale", 1, 2.0, lambda t: 0.5 + 0.1 * t, f=lambda t, d, x, u: 0.0, g=lambda t, x: 0.0)
    with pytest.raises(HypothesisViolation):
        hale_to_coupled(spec)
    with pytest.raises(ConfigurationError):
        hale_to_coupled(NeutralSpec("bellman", 1, 1.0, 1.0, f=lambda *a: 0.0))


def test_hale_matched_data_satisfies_neutral_equation():
    # smooth matched data: x = cos on [-1, 0], x1(0) = x(0) - x(-1)
    x20 = lambda th: math.cos(th)
    x10 = lambda th: math.cos(th) - math.cos(th - 1.0)
    traj = solve_coupled(hale_to_coupled(hale_1_8()), x10, x20, horizon=2.0, substeps_per_step=256)
    h = 0.5 / 256
    worst = 0.0
    for t in np.arange(0.0, 2.0, 0.125) + h / 2:
        lhs = ((traj.x2_at(t + h / 2) - traj.x2_at(t + h / 2 - 1.0))
               - (traj.x2_at(t - h / 2) - traj.x2_at(t - h / 2 - 1.0))) / h
        worst = max(worst, abs(lhs[0] - traj.x2_at(t - 0.5)[0]))
    assert worst < 1e-4


def test_matched_data_match_closed_form_on_first_step():
    # x(t) = x(t - 1) + x(0) - x(-1) + int_0^t x(s - 1/2) ds with x = cos before 0
    traj = solve_coupled(neutral_difference(0.5), 1.0 - math.cos(1.0), lambda th: math.cos(th),
                         horizon=0.5, substeps_per_step=256)
    worst = 0.0
    T = traj.x2.times
    for t in T[T > 0]:
        exact = math.cos(t - 1) + 1 - math.cos(1.0) + math.sin(t - 0.5) + math.sin(0.5)
        worst = max(worst, abs(traj.x2_at(t)[0] - exact))
    assert worst < 1e-8
    assert traj.jump_points == []


def test_bellman_of_example_4_1_is_the_built_in_system():
    a, c, r = 1.0, 3.0, 0.5
    spec = NeutralSpec("bellman", 1, 2 * r, r,
                       f=lambda t, d, x, xd, u: -a * x(0.0) + d * xd(-2 * r) * math.cos(t) / c, d_dim=1)
    one = solve_coupled(bellman_to_coupled(spec), 1.0, 1.0, d=1.0, horizon=3.0, substeps_per_step=32)
    two = solve_coupled(example_4_1(a, c, r), 1.0, 1.0, d=1.0, horizon=3.0, substeps_per_step=32)
    assert np.array_equal(one.table()[1], two.table()[1])
    assert np.array_equal(one.table()[2], two.table()[2])


def test_bellman_without_neutral_term():
    spec = NeutralSpec("bellman", 1, 1.0, 1.0, f=lambda t, d, x, xd, u: -x(0.0))
    traj = solve_coupled(bellman_to_coupled(spec), 1.0, -1.0, horizon=3.0, substeps_per_step=128)
    h = 1 / 128
    for t in (0.5, 1.5, 2.875):
        assert traj.x1_at(t)[0] == pytest.approx(math.exp(-t), abs=1e-9)
        assert traj.x2_at(t)[0] == pytest.approx(-traj.x1_at(t)[0], abs=1e-9)
        fd = (traj.x1_at(t + h / 2) - traj.x1_at(t - h / 2)) / h
        assert abs(fd[0] - traj.x2_at(t)[0]) < 1e-5


def test_matching_examples():
    assert check_matching("example_1_8", 0.0, 2.5, r=0.5).passed
    rep = check_matching("example_1_8", 1.0, 0.0, r=0.5)
    assert not rep.passed and rep.details["residual"] == 1.0
    spec = hale_1_8()
    assert check_matching("hale", lambda th: math.cos(th) - math.cos(th - 1.0), math.cos, spec=spec).passed
    assert not check_matching("hale", 1.0 - math.cos(1.0), math.cos, spec=spec).passed
    assert check_matching("bellman", lambda th: math.sin(th), lambda th: math.cos(th), r=1.0).passed
    assert not check_matching("bellman", lambda th: math.sin(th), 0.0, r=1.0).passed
    assert check_matching("bellman", math.sin, math.cos, r=1.0, deriv=math.cos).passed


def transport(gain=0.5, lam=0.0, profile=lambda z: 1.0 + z):
    return TransportPdeSpec(a=[1.0], lam=[lam], boundary=lambda t, d, xi, u, w: gain * w, v0=[profile],
                            boundary_src=[f"{gain} * w_0"])


def test_transport_reduction_text():
    red = pde_to_coupled(transport(), warmup=False)
    assert "w_0(t) = 1.0 * x2_0(t - 1.0)" in red.fde_text
    assert "x2_0(t) = 0.5 * w_0" in red.fde_text
    assert red.system.tau_at(0.0) == 1.0 and red.system.r2 == 1.0


def test_transport_matches_characteristics():
    spec = transport()
    red = pde_to_coupled(spec, warmup=False)
    traj = solve_coupled(red.system, red.x10, red.x20, horizon=5.0, substep=2 * red.x2_spacing)
    times = np.arange(1, 1001) * 5.0 / 1024
    err = max(abs(traj.x2_at(t)[0] - characteristic_boundary_value(spec, t)[0]) for t in times)
    assert err < 1e-10


def test_transport_conservation_and_decay():
    red = pde_to_coupled(transport(1.0, 0.0, lambda z: 2.0), warmup=True)
    assert np.all(red.warmup.x2.values == 2.0)
    red = pde_to_coupled(transport(1.0, -1.0, lambda z: 1.0), warmup=False)
    traj = solve_coupled(red.system, red.x10, red.x20, horizon=4.0, substeps_per_step=8)
    for t in (1.0, 2.0, 3.0, 4.0):
        assert traj.x2_at(t)[0] == pytest.approx(math.exp(-1.0) * traj.x2_at(t - 1.0)[0], rel=1e-12)


def test_transport_rejects_nonpositive_speed():
    with pytest.raises(HypothesisViolation):
        pde_to_coupled(TransportPdeSpec(a=[0.0], lam=[0.0], boundary=lambda *a: 0.0, v0=[lambda z: 0.0]))
