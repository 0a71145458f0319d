import numpy as np
import pytest
from multiseg.errors import ShapeError
from multiseg.optim import AdamState, adam_step, sgd_step


def params_and_grads():
    params = {"w": np.array([0.5, -0.25, 1.0], dtype=np.float32), "b": np.zeros(2, np.float32)}
    grads = {"w": np.array([0.2, -3.0, 1e-3], dtype=np.float32), "b": np.ones(2, np.float32)}
    return params, grads


def test_first_adam_step_moves_by_learning_rate():
    params, grads = params_and_grads()
    before = {k: v.copy() for k, v in params.items()}
    state = AdamState()
    adam_step(params, grads, state, lr=1e-3)
    assert state.t == 1
    for name in params:
        np.testing.assert_allclose(
            params[name] - before[name], -1e-3 * np.sign(grads[name]), rtol=1e-3, atol=1e-7
        )


def test_zero_gradient_leaves_parameters():
    params, grads = params_and_grads()
    before = {k: v.copy() for k, v in params.items()}
    zeros = {k: np.zeros_like(v) for k, v in grads.items()}
    adam_step(params, zeros, AdamState(), lr=1e-3)
    for name in params:
        np.testing.assert_array_equal(params[name], before[name])


def test_zero_learning_rate_still_tracks_moments():
    params, grads = params_and_grads()
    before = {k: v.copy() for k, v in params.items()}
    state = AdamState()
    adam_step(params, grads, state, lr=0.0)
    np.testing.assert_array_equal(params["w"], before["w"])
    assert state.t == 1
    np.testing.assert_allclose(state.m["w"], 0.1 * grads["w"])


def test_identical_gradients_evolve_identically():
    a, grads = params_and_grads()
    b = {k: v.copy() for k, v in a.items()}
    state_a, state_b = AdamState(), AdamState()
    for _ in range(5):
        adam_step(a, grads, state_a, lr=0.01)
        adam_step(b, grads, state_b, lr=0.01)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])


def test_sgd_step():
    params, grads = params_and_grads()
    before = {k: v.copy() for k, v in params.items()}
    _, state = sgd_step(params, grads, None, lr=0.1)
    assert state is None
    np.testing.assert_allclose(params["w"], before["w"] - 0.1 * grads["w"], rtol=1e-6)


def test_misaligned_gradients():
    params, grads = params_and_grads()
    with pytest.raises(ShapeError, match="names"):
        adam_step(params, {"w": grads["w"]}, AdamState(), lr=1e-3)
    grads["b"] = np.ones(3, np.float32)
    with pytest.raises(ShapeError, match="'b'"):
        sgd_step(params, grads, None, lr=1e-3)
