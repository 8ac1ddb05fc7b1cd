import numpy as np
import pytest

from tensorlogic.exceptions import ParameterValidationError
from tensorlogic.optim import Adam, AdamW, clip_grad_norm, global_norm


def test_adam_first_step_moves_by_learning_rate():
    params = {"w": np.array([1.0, -1.0])}
    Adam(params, lr=0.1).step({"w": np.array([0.5, -2.0])})
    np.testing.assert_allclose(params["w"], [0.9, -0.9], atol=1e-6)


def test_adam_minimizes_quadratic():
    params = {"w": np.array([3.0, -2.0])}
    optimizer = Adam(params, lr=0.1)
    for _ in range(500):
        optimizer.step({"w": 2.0 * params["w"]})
    np.testing.assert_allclose(params["w"], 0.0, atol=5e-2)


def test_adamw_decouples_weight_decay():
    coupled = {"w": np.array([2.0])}
    decoupled = {"w": np.array([2.0])}
    Adam(coupled, lr=0.1, weight_decay=2.0).step({"w": np.array([0.0])})
    AdamW(decoupled, lr=0.1, weight_decay=2.0).step({"w": np.array([0.0])})
    # coupled: first Adam step has magnitude lr whatever the decay
    np.testing.assert_allclose(coupled["w"], [1.9], atol=1e-6)
    np.testing.assert_allclose(decoupled["w"], [2.0 * (1 - 0.1 * 2.0)])


def test_step_skips_parameters_without_gradients():
    params = {"a": np.ones(2), "b": np.ones(2)}
    Adam(params, lr=0.1).step({"a": np.ones(2)})
    np.testing.assert_array_equal(params["b"], np.ones(2))


def test_invalid_hyperparameters():
    with pytest.raises(ParameterValidationError):
        Adam({"w": np.zeros(1)}, lr=0.0)
    with pytest.raises(ParameterValidationError):
        Adam({"w": np.zeros(1)}, betas=(0.9, 1.0))
    with pytest.raises(ParameterValidationError):
        AdamW({"w": np.zeros(1)}, weight_decay=-1.0)


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert global_norm(grads) == pytest.approx(5.0)
    clipped, norm = clip_grad_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    assert global_norm(clipped) == pytest.approx(1.0, rel=1e-5)
    assert global_norm(clipped) <= 1.0


def test_clip_grad_norm_leaves_small_gradients():
    grads = {"a": np.array([0.1, 0.2])}
    clipped, _ = clip_grad_norm(grads, 1.0)
    np.testing.assert_array_equal(clipped["a"], grads["a"])
    with pytest.raises(ParameterValidationError):
        clip_grad_norm(grads, 0.0)
