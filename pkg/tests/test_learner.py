import math

import numpy as np
import pytest

from mthfl.errors import DimensionError, EmptyAggregateError
from mthfl.learner import (ModelParams, TrainSpec, evaluate, init_params, local_train,
                           local_train_many, loss_and_grad, weighted_average)


def _random_instance(rng):
    d, k, m = rng.integers(1, 6), rng.integers(2, 6), rng.integers(1, 12)
    p = ModelParams(rng.normal(0, 1, d * k + k), d, k)
    return p, rng.normal(0, 2, (m, d)), rng.integers(0, k, m)


def test_param_layout():
    p = init_params(2, 3, seed=0)
    assert len(p) == 9 and not p.values.any()
    p = ModelParams(np.arange(9.0), 2, 3)
    assert p.weights.tolist() == [[0, 1, 2], [3, 4, 5]] and p.bias.tolist() == [6, 7, 8]
    with pytest.raises(DimensionError):
        ModelParams(np.zeros(8), 2, 3)


def test_zero_model_loss_is_log_k(rng):
    for k in (2, 3, 10):
        x = rng.normal(size=(17, 4))
        loss, _ = loss_and_grad(init_params(4, k, 0), x, rng.integers(0, k, 17))
        assert abs(loss - math.log(k)) <= 1e-12


def test_gradient_matches_central_differences(rng):
    h = 1e-5
    for _ in range(100):
        p, x, y = _random_instance(rng)
        _, g = loss_and_grad(p, x, y)
        num = np.empty_like(g)
        for i in range(g.size):
            e = np.zeros_like(g)
            e[i] = h
            num[i] = (loss_and_grad(ModelParams(p.values + e, p.d, p.k), x, y)[0]
                      - loss_and_grad(ModelParams(p.values - e, p.d, p.k), x, y)[0]) / (2 * h)
        assert np.linalg.norm(g - num) <= 1e-4 * max(np.linalg.norm(num), 1e-8)


def test_duplicating_rows_leaves_loss_and_gradient_unchanged(rng):
    for _ in range(20):
        p, x, y = _random_instance(rng)
        l1, g1 = loss_and_grad(p, x, y)
        l2, g2 = loss_and_grad(p, np.vstack([x, x]), np.concatenate([y, y]))
        assert l1 == pytest.approx(l2, abs=1e-12)
        np.testing.assert_allclose(g1, g2, atol=1e-12)


def test_extreme_logits_are_stable():
    p = ModelParams(np.array([1e4, -1e4, 0.0, 0.0]), 1, 2)
    loss, g = loss_and_grad(p, np.array([[1.0]]), np.array([1]))
    assert loss == pytest.approx(2e4) and np.all(np.isfinite(g))


def _oracle_step(values, d, k, x, y, lr):
    w = values[: d * k].reshape(d, k)
    b = values[d * k:]
    z = x @ w + b
    z = z - z.max(axis=1, keepdims=True)
    prob = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    onehot = np.eye(k)[y]
    gw = x.T @ (prob - onehot) / len(y)
    gb = (prob - onehot).mean(axis=0)
    return values - lr * np.concatenate([gw.ravel(), gb])


def test_full_batch_steps_match_hand_oracle(rng):
    p, x, y = init_params(3, 4, 1, scale=0.5), rng.normal(size=(8, 3)), rng.integers(0, 4, 8)
    out = local_train(p, x, y, TrainSpec(0.3, 4, batch_size=8), seed=0)
    want = p.values
    for _ in range(4):
        want = _oracle_step(want, 3, 4, x, y, 0.3)
    np.testing.assert_allclose(out.values, want, atol=1e-12)


def test_zero_learning_rate_is_identity(rng):
    p, x, y = _random_instance(rng)
    assert local_train(p, x, y, TrainSpec(0.0, 5, 3), 0) == p


def test_training_reduces_loss_on_separable_data(rng):
    x = np.vstack([rng.normal(-3, 1, (50, 2)), rng.normal(3, 1, (50, 2))])
    y = np.repeat([0, 1], 50)
    p0 = init_params(2, 2, 0)
    p1 = local_train(p0, x, y, TrainSpec(0.1, 50, 10), 0)
    assert evaluate(p1, x, y)[0] < evaluate(p0, x, y)[0]
    assert evaluate(p1, x, y)[1] >= 0.95


def test_local_train_is_deterministic_in_seed(rng):
    p, x, y = init_params(2, 3, 0, 0.1), rng.normal(size=(30, 2)), rng.integers(0, 3, 30)
    spec = TrainSpec(0.1, 5, 4)
    assert local_train(p, x, y, spec, 7) == local_train(p, x, y, spec, 7)
    assert local_train(p, x, y, spec, 7) != local_train(p, x, y, spec, 8)


def test_batched_training_matches_per_client_loop(rng):
    d, k = 3, 4
    x, y = rng.normal(size=(200, d)), rng.integers(0, k, 200)
    shards = [np.arange(0, 7), np.arange(7, 60), np.arange(60, 63), np.arange(63, 200)]
    start = rng.normal(size=(4, d * k + k))
    spec = TrainSpec(0.2, 6, 10)
    out = local_train_many(start, d, k, x, y, shards, spec,
                           [np.random.default_rng(i) for i in range(4)])
    for i, s in enumerate(shards):
        ref = local_train(ModelParams(start[i], d, k), x[s], y[s], spec, np.random.default_rng(i))
        np.testing.assert_allclose(out[i], ref.values, atol=1e-12)


def test_accuracy_of_zero_model_is_class_zero_frequency(rng):
    y = rng.integers(0, 3, 101)
    _, acc = evaluate(init_params(2, 3, 0), rng.normal(size=(101, 2)), y)
    assert acc == np.mean(y == 0)


def test_weighted_average_examples():
    a = ModelParams(np.array([1.0, 3.0, 0.0, 0.0]), 1, 2)
    b = ModelParams(np.array([5.0, 7.0, 0.0, 0.0]), 1, 2)
    assert weighted_average([a, b], [1, 3]).values[:2].tolist() == [4.0, 6.0]
    assert weighted_average([a, b], [1, 0]) == a
    with pytest.raises(EmptyAggregateError):
        weighted_average([a, b], [0, 0])
    with pytest.raises(EmptyAggregateError):
        weighted_average([], [])


def test_weighted_average_scale_invariance_and_nesting(rng):
    for _ in range(100):
        n = rng.integers(2, 9)
        models = [ModelParams(rng.normal(size=6), 1, 3) for _ in range(n)]
        w = rng.uniform(0.1, 10, n)
        flat = weighted_average(models, w)
        np.testing.assert_allclose(weighted_average(models, 7.5 * w).values, flat.values, atol=1e-9)
        cut = rng.integers(1, n)
        left = weighted_average(models[:cut], w[:cut])
        right = weighted_average(models[cut:], w[cut:])
        nested = weighted_average([left, right], [w[:cut].sum(), w[cut:].sum()])
        np.testing.assert_allclose(nested.values, flat.values, atol=1e-9)
