import numpy as np
import pytest
from hypothesis import given, strategies as st

from delaystack.errors import ContractViolation, HistoryRangeError
from delaystack.history import BoundedHistory, BoundedSegment, ContinuousHistory, HermitePiece


def ramp():
    return ContinuousHistory.from_function(lambda th: th, 0.0, 1.0, deriv=lambda th: 1.0)


def test_constant_histories_sample_constant():
    for t in (-1.0, -0.3, 0.0):
        assert ContinuousHistory.constant([2.0, -1.0], 0.0, 1.0).sample(t).tolist() == [2.0, -1.0]
        assert BoundedHistory.constant(3.0, 0.0, 1.0).sample(t).tolist() == [3.0]


def test_continuous_sample_and_sup():
    h = ramp()
    assert h.sample(-0.5)[0] == pytest.approx(-0.5, abs=1e-15)
    assert h.window_sup(-1.0, 0.0) == pytest.approx(1.0)
    assert h.window_sup(-0.5, 0.0) == pytest.approx(0.5)


def test_bounded_jump_convention():
    h = BoundedHistory([-1.0, -1.0, 0.0], [1.0, 0.0, 0.0], window=1.0)
    assert h.sample(-1.0)[0] == 1.0
    assert h.sample(-1.0, right=True)[0] == 0.0
    assert h.sample(-0.9)[0] == 0.0
    assert h.jump_points == [-1.0]


def test_bounded_piecewise_sup():
    h = BoundedHistory.from_pieces([(-1.0, -0.5, lambda th: 1.0), (-0.5, 0.0, lambda th: 3.0)], 0.0, 0.1)
    assert h.window_sup() == 3.0
    assert h.window_sup(-1.0, -0.6) == 1.0
    assert h.sample(-0.5)[0] == 1.0
    assert h.sample(-0.5, right=True)[0] == 3.0


def test_constant_window_sup_is_norm():
    assert ContinuousHistory.constant([3.0, 4.0], 0.0, 2.0).window_sup() == pytest.approx(5.0)
    assert BoundedHistory.constant([3.0, 4.0], 0.0, 2.0).window_sup() == pytest.approx(5.0)


def test_out_of_window_sample_raises():
    with pytest.raises(HistoryRangeError):
        ramp().sample(-1.5)
    with pytest.raises(HistoryRangeError):
        BoundedHistory.constant(1.0, 0.0, 1.0).sample(0.5)
    with pytest.raises(HistoryRangeError):
        ramp().window_sup(-2.0, 0.0)
    with pytest.raises(HistoryRangeError):
        ramp().window_sup(0.0, -0.5)


def test_bounded_shift_append_records_jump():
    h = BoundedHistory.constant(0.0, 0.0, 1.0)
    h.shift_append(BoundedSegment(0.0, np.array([1.0]), np.array([0.25, 0.5]), np.array([[1.0], [1.0]])))
    assert h.jump_points == [0.0]
    assert h.window_sup() == 1.0
    assert h.current_time == 0.5
    assert h.sample(0.0)[0] == 0.0
    assert h.sample(0.1)[0] == 1.0


def test_bounded_shift_append_continuous_has_no_jump():
    h = BoundedHistory.constant(1.0, 0.0, 1.0)
    h.shift_append(BoundedSegment(0.0, np.array([1.0]), np.array([0.5]), np.array([[2.0]])))
    assert h.jump_points == []


def test_shift_append_wrong_start_raises():
    with pytest.raises(ContractViolation):
        BoundedHistory.constant(0.0, 0.0, 1.0).shift_append(
            BoundedSegment(0.1, np.array([1.0]), np.array([0.5]), np.array([[1.0]])))
    one = np.array([1.0])
    with pytest.raises(ContractViolation):
        ramp().shift_append(HermitePiece(0.2, 0.5, np.array([0.2]), np.array([0.5]), one, one))


def test_continuous_shift_append_continuing_polynomial():
    h = ramp()
    one = np.array([1.0])
    h.shift_append(HermitePiece(0.0, 0.5, np.array([0.0]), np.array([0.5]), one, one))
    assert h.sample(0.25)[0] == pytest.approx(0.25, abs=1e-15)
    assert h.left_time == pytest.approx(-0.5)
    with pytest.raises(HistoryRangeError):
        h.sample(-0.75)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_monomial_window_sup(p):
    h = ContinuousHistory.from_function(lambda th: th ** p, 0.0, 1.0, nodes=8, deriv=lambda th: p * th ** (p - 1))
    assert abs(h.window_sup() - 1.0) < 1e-10


def test_cubic_interior_maximum():
    # x(t) = t - t^3 on [0, 1] peaks at t = 1/sqrt(3)
    f = lambda th: (th + 1) - (th + 1) ** 3
    df = lambda th: 1 - 3 * (th + 1) ** 2
    h = ContinuousHistory.from_function(f, 0.0, 1.0, nodes=4, deriv=df)
    assert abs(h.window_sup() - 2 / (3 * np.sqrt(3))) < 1e-10


def test_csv_header():
    text = BoundedHistory.constant([1.0, 2.0], 0.0, 1.0).to_csv()
    assert text.splitlines()[0] == "t,x_0,x_1"


# ---------------------------------------------------------------- properties

values = st.lists(st.floats(-10, 10), min_size=2, max_size=12)


@given(values, st.floats(0, 1))
def test_window_sup_dominates_samples(vals, frac):
    times = np.linspace(-1.0, 0.0, len(vals))
    b = BoundedHistory(times, vals, window=1.0)
    c = ContinuousHistory.from_samples(times, vals, window=1.0)
    t = -1.0 + frac
    assert b.window_sup() >= abs(b.sample(t)[0]) - 1e-12
    assert c.window_sup() >= abs(c.sample(t)[0]) - 1e-12


@given(values, values, st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_append_keeps_the_past(old, new, probes):
    times = np.linspace(-1.0, 0.0, len(old))
    h = BoundedHistory(times, old, window=None)
    before = {p: h.sample(-1.0 + p).copy() for p in probes}
    seg_t = np.linspace(0.0, 0.5, len(new) + 1)[1:]
    h.shift_append(BoundedSegment(0.0, np.array([new[0]]), seg_t, np.array(new)[:, None]))
    for p, v in before.items():
        assert np.array_equal(h.sample(-1.0 + p), v)
