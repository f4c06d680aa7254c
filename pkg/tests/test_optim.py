import numpy as np
import numpy.testing as npt
import pytest

from phasestream.errors import ShapeError
from phasestream.optim import SgdMomentumState, sgd_momentum_step


def test_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, 2.0])}
    state = SgdMomentumState()
    sgd_momentum_step(p, {"w": np.zeros(2)}, state, 0)
    npt.assert_array_equal(p["w"], [1.0, 2.0])


def test_single_step_values():
    p = {"w": np.array([1.0])}
    state = SgdMomentumState(learning_rate=0.01, momentum=0.9)
    sgd_momentum_step(p, {"w": np.array([1.0])}, state, 0)
    npt.assert_allclose(state.velocity["w"], [-0.01])
    npt.assert_allclose(p["w"], [0.99])


def test_momentum_accumulates():
    p = {"w": np.array([0.0])}
    state = SgdMomentumState(learning_rate=0.1, momentum=0.5, decay_steps=())
    g = {"w": np.array([1.0])}
    sgd_momentum_step(p, g, state, 0)   # v = -0.1
    sgd_momentum_step(p, g, state, 1)   # v = -0.15
    npt.assert_allclose(state.velocity["w"], [-0.15])
    npt.assert_allclose(p["w"], [-0.25])


def test_default_schedule_matches_protocol():
    state = SgdMomentumState(learning_rate=0.01)
    assert state.lr_at(0) == pytest.approx(0.01)
    assert state.lr_at(44999) == pytest.approx(0.01)
    assert state.lr_at(45000) == pytest.approx(0.001)
    assert state.lr_at(74999) == pytest.approx(0.001)
    assert state.lr_at(75000) == pytest.approx(0.0001)
    assert state.lr_at(99999) == pytest.approx(0.0001)


def test_shape_mismatch_rejected():
    state = SgdMomentumState()
    with pytest.raises(ShapeError):
        sgd_momentum_step({"w": np.zeros(3)}, {"w": np.zeros(4)}, state, 0)


def test_updates_are_in_place():
    w = np.array([1.0, 1.0])
    params = {"w": w}
    state = SgdMomentumState(learning_rate=0.5, momentum=0.0, decay_steps=())
    sgd_momentum_step(params, {"w": np.ones(2)}, state, 0)
    npt.assert_allclose(w, [0.5, 0.5])
