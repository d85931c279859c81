import math

import numpy as np
import pytest

from training.optimizer import (
    Adam,
    NonFiniteGradientError,
    OptimizerState,
    adam_step,
    clip_by_global_norm,
    global_norm,
)


def _params(rng):
    return {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=4)}


def test_zero_gradients_leave_parameters_unchanged(rng):
    params = _params(rng)
    before = {k: v.copy() for k, v in params.items()}
    state = OptimizerState.zeros_like(params)
    adam_step(params, {k: np.zeros_like(v) for k, v in params.items()}, state, learning_rate=0.1)
    for k in params:
        np.testing.assert_array_equal(params[k], before[k])
    assert state.t == 1


def test_first_step_is_learning_rate_times_sign(rng):
    params = _params(rng)
    before = {k: v.copy() for k, v in params.items()}
    grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
    adam_step(params, grads, OptimizerState.zeros_like(params), learning_rate=1e-3, epsilon=1e-8)
    for k in params:
        expected = -1e-3 * grads[k] / (np.abs(grads[k]) + 1e-8)
        np.testing.assert_allclose(params[k] - before[k], expected, rtol=1e-9, atol=1e-18)
        np.testing.assert_allclose(params[k] - before[k], -1e-3 * np.sign(grads[k]), rtol=1e-3)


def test_two_steps_on_quadratic_match_hand_computation():
    # f(x) = (x - 3)^2, gradient 2 (x - 3)
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    x = 1.0
    m = v = 0.0
    for t in (1, 2):
        g = 2.0 * (x - 3.0)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        x = x - lr * m_hat / (math.sqrt(v_hat) + eps)

    params = {"x": np.array([1.0])}
    state = OptimizerState.zeros_like(params)
    for _ in range(2):
        grads = {"x": 2.0 * (params["x"] - 3.0)}
        adam_step(params, grads, state, learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps)
    assert abs(params["x"][0] - x) <= 1e-12
    assert state.t == 2


def test_non_finite_gradient_raises_before_any_update(rng):
    params = _params(rng)
    before = {k: v.copy() for k, v in params.items()}
    state = OptimizerState.zeros_like(params)
    grads = {"w": np.zeros((3, 4)), "b": np.array([0.0, np.nan, 0.0, 0.0])}
    with pytest.raises(NonFiniteGradientError, match="b"):
        adam_step(params, grads, state, learning_rate=0.1)
    grads["b"] = np.array([0.0, np.inf, 0.0, 0.0])
    with pytest.raises(NonFiniteGradientError):
        adam_step(params, grads, state, learning_rate=0.1)
    assert state.is_reset()
    for k in params:
        np.testing.assert_array_equal(params[k], before[k])


def test_gradient_validation(rng):
    params = _params(rng)
    state = OptimizerState.zeros_like(params)
    with pytest.raises(KeyError):
        adam_step(params, {"nope": np.zeros(1)}, state, learning_rate=0.1)
    with pytest.raises(ValueError, match="shape"):
        adam_step(params, {"b": np.zeros(5)}, state, learning_rate=0.1)


def test_global_norm_clipping():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert global_norm(grads) == pytest.approx(5.0)
    clipped = clip_by_global_norm(grads, 1.0)
    np.testing.assert_allclose(clipped["a"], [0.6])
    np.testing.assert_allclose(clipped["b"], [0.8])
    assert clip_by_global_norm(grads, 10.0)["a"] is grads["a"]


def test_linear_decay_reaches_zero_at_total_steps():
    params = {"x": np.zeros(2)}
    opt = Adam(params, learning_rate=1.0, total_steps=4)
    rates = []
    for _ in range(4):
        rates.append(opt.current_learning_rate())
        opt.step({"x": np.ones(2)})
    assert rates == [1.0, 0.75, 0.5, 0.25]
    assert opt.current_learning_rate() == 0.0


def test_linear_decay_restarts_on_a_carried_over_state():
    params = {"x": np.zeros(2)}
    first = Adam(params, learning_rate=1.0, total_steps=2)
    for _ in range(2):
        first.step({"x": np.ones(2)})
    assert first.state.t == 2

    second = Adam(params, learning_rate=1.0, total_steps=4, state=first.state)
    assert second.current_learning_rate() == 1.0
    before = params["x"].copy()
    second.step({"x": np.ones(2)})
    assert second.state.t == 3
    assert second.current_learning_rate() == 0.75
    assert not np.array_equal(params["x"], before)


def test_constant_rate_without_total_steps():
    opt = Adam({"x": np.zeros(2)}, learning_rate=0.01)
    opt.step({"x": np.ones(2)})
    assert opt.current_learning_rate() == 0.01


def test_optimizer_updates_in_place_and_resets(rng):
    params = _params(rng)
    w = params["w"]
    opt = Adam(params, learning_rate=0.01, clip_norm=0.5)
    opt.step({k: rng.normal(size=v.shape) for k, v in params.items()})
    assert params["w"] is w
    assert not opt.state.is_reset()
    opt.reset()
    assert opt.state.is_reset()
    assert opt.state.m["w"].shape == (3, 4)


def test_learning_rate_must_be_positive():
    with pytest.raises(ValueError):
        Adam({"x": np.zeros(1)}, learning_rate=0.0)
