import pytest
from hypothesis import given, strategies as st

from viou.geom import BBox
from viou.predictor import ConstantPosition, make_predictor, predict_backward, predict_forward


def hist(*xs, frame0=0, w=10, h=10):
    return [(frame0 + k, BBox(x, 0, w, h)) for k, x in enumerate(xs)]


def close(a: BBox, b: BBox):
    return all(abs(p - q) < 1e-9 for p, q in zip(a.as_tuple(), b.as_tuple()))


def test_forward_linear():
    assert close(predict_forward(hist(0, 10), 1), BBox(20, 0, 10, 10))


def test_forward_single_entry():
    b = BBox(3, 4, 5, 6)
    assert predict_forward([(0, b)], 5) == b


def test_forward_mean_displacement():
    assert close(predict_forward(hist(0, 4, 8), 2), BBox(16, 0, 10, 10))


def test_backward_linear():
    assert close(predict_backward(hist(20, 30, frame0=5), 1), BBox(10, 0, 10, 10))


def test_backward_single_entry():
    b = BBox(1, 1, 2, 2)
    assert predict_backward([(9, b)], 3) == b


def test_backward_mean_displacement():
    assert close(predict_backward(hist(16, 20, 24, frame0=3), 3), BBox(4, 0, 10, 10))


def test_window_uses_recent_history():
    # stopped after moving: the last three entries say velocity 0
    h = hist(0, 10, 20, 20, 20)
    assert close(predict_forward(h, 1), BBox(20, 0, 10, 10))
    assert close(make_predictor(window=5).forward(h, 1), BBox(25, 0, 10, 10))


def test_sparse_history_velocity_per_frame():
    h = [(0, BBox(0, 0, 10, 10)), (4, BBox(8, 0, 10, 10))]
    assert close(predict_forward(h, 1), BBox(10, 0, 10, 10))


@pytest.mark.parametrize("steps", [0, -1])
def test_nonpositive_steps_rejected(steps):
    with pytest.raises(ValueError):
        predict_forward(hist(0, 1), steps)
    with pytest.raises(ValueError):
        predict_backward(hist(0, 1), steps)


def test_empty_history_rejected():
    with pytest.raises(ValueError):
        predict_forward([], 1)


def test_constant_position():
    p = ConstantPosition()
    h = hist(0, 10, 20)
    assert p.forward(h, 4) == h[-1][1]
    assert p.backward(h, 4) == h[0][1]


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_predictor("kalman")


@given(st.floats(-50, 50), st.floats(-50, 50), st.integers(1, 20))
def test_forward_backward_symmetry(vx, x0, steps):
    h = hist(x0, x0 + vx, x0 + 2 * vx)
    fw = predict_forward(h, steps)
    bw = predict_backward(h, steps)
    assert fw.cx - h[-1][1].cx == pytest.approx(steps * vx, abs=1e-9)
    assert h[0][1].cx - bw.cx == pytest.approx(steps * vx, abs=1e-9)
