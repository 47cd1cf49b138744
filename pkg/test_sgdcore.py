#!/usr/bin/env python3
"""
Tests for the toy data-parallel SGD reference.

Runs under pytest or directly: python test_sgdcore.py
"""

from unittest import mock

import numpy as np
import pytest

import sgdcore
from errors import ModelInvariantError, NumericDivergenceError
from sgdcore import (
    Gradient,
    ModelState,
    SgdConfig,
    accuracy,
    batch_step_sweep,
    evaluate,
    forward_backward,
    init_model,
    make_blobs_dataset,
    max_relative_difference,
    parallel_train,
    sgd_step,
    train,
    train_validation_split,
)


def _random_batch(rng, count=32, inputs=4, classes=3):
    features = rng.normal(size=(count, inputs))
    labels = rng.integers(0, classes, size=count)
    return features, labels


def test_zero_model_on_symmetric_data_has_zero_gradient():
    model = ModelState.zeros((2, 4, 2))
    features = np.array([[1.0, 2.0], [1.0, 2.0], [-3.0, 0.5], [-3.0, 0.5]])
    labels = np.array([0, 1, 0, 1])
    loss, gradient = forward_backward(model, features, labels)
    assert loss == pytest.approx(np.log(2.0))
    np.testing.assert_allclose(gradient.dw, 0.0, atol=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    model = init_model((4, 8, 3), rng)
    features, labels = _random_batch(rng)
    _, gradient = forward_backward(model, features, labels)

    step = 1e-5
    coordinates = rng.choice(model.w.size, size=50, replace=False)
    numeric = []
    for index in coordinates:
        plus, minus = model.w.copy(), model.w.copy()
        plus[index] += step
        minus[index] -= step
        loss_plus, _ = forward_backward(ModelState(plus, model.dims), features, labels)
        loss_minus, _ = forward_backward(ModelState(minus, model.dims), features, labels)
        numeric.append((loss_plus - loss_minus) / (2 * step))
    assert max_relative_difference(gradient.dw[coordinates], np.array(numeric), floor=1e-6) <= 1e-4


def test_loss_is_a_batch_mean():
    rng = np.random.default_rng(3)
    model = init_model((4, 8, 3), rng)
    features, labels = _random_batch(rng)
    loss, gradient = forward_backward(model, features, labels)
    loss2, gradient2 = forward_backward(model, np.vstack([features, features]), np.concatenate([labels, labels]))
    assert loss2 == pytest.approx(loss, rel=1e-12)
    np.testing.assert_allclose(gradient2.dw, gradient.dw, rtol=1e-10, atol=1e-14)


def test_shard_mean_equals_full_batch_gradient():
    rng = np.random.default_rng(5)
    model = init_model((4, 8, 3), rng)
    features, labels = _random_batch(rng, count=64)
    _, full = forward_backward(model, features, labels)
    total = np.zeros_like(model.w)
    for shard_x, shard_y in zip(np.array_split(features, 4), np.array_split(labels, 4)):
        total += forward_backward(model, shard_x, shard_y)[1].dw
    np.testing.assert_allclose(total / 4, full.dw, rtol=0, atol=1e-12)


def test_non_finite_loss_reports_iteration():
    dims = (2, 3, 2)
    # finite but huge weights overflow the logits
    model = ModelState(np.full(sgdcore.parameter_count(dims), 1e308), dims, t=7)
    with pytest.raises(NumericDivergenceError) as info:
        forward_backward(model, np.ones((2, 2)), np.array([0, 1]))
    assert info.value.iteration == 7
    assert "iteration 7" in str(info.value)


def test_overflowing_update_is_divergence():
    model = ModelState(np.array([1e308, 0.0, 0.0, 0.0]), (1, 1, 1), t=2)
    with pytest.raises(NumericDivergenceError) as info:
        sgd_step(model, Gradient(np.array([-1e308, 0.0, 0.0, 0.0])), 10.0)
    assert info.value.iteration == 3


def test_non_finite_state_rejected():
    dims = (2, 3, 2)
    with pytest.raises(ModelInvariantError):
        ModelState(np.full(sgdcore.parameter_count(dims), np.nan), dims)
    with pytest.raises(ModelInvariantError):
        Gradient(np.array([0.0, np.inf]))


def test_empty_batch_rejected():
    with pytest.raises(ModelInvariantError):
        forward_backward(ModelState.zeros((2, 3, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_sgd_step_arithmetic():
    model = ModelState(np.array([1.0, 0.0, 0.0, 0.0]), (1, 1, 1))
    stepped = sgd_step(model, Gradient(np.array([0.5, 0.0, 0.0, 0.0])), 0.1)
    assert stepped.w[0] == pytest.approx(0.95)
    assert stepped.t == 1

    unchanged = sgd_step(model, Gradient(np.array([0.5, 1.0, 2.0, 3.0])), 0.0)
    np.testing.assert_array_equal(unchanged.w, model.w)

    delta = np.array([0.25, -0.5, 0.75, 1.0])
    there = sgd_step(model, Gradient(delta), 0.5)
    back = sgd_step(there, Gradient(-delta), 0.5)
    np.testing.assert_array_equal(back.w, model.w)


def test_sgd_step_dimension_mismatch():
    with pytest.raises(ModelInvariantError):
        sgd_step(ModelState.zeros((1, 1, 1)), Gradient(np.zeros(3)), 0.1)


def test_config_validation():
    with pytest.raises(ModelInvariantError):
        SgdConfig(global_batch=32, step_size=0.1, iterations=10, n_workers=3)
    with pytest.raises(ModelInvariantError):
        SgdConfig(global_batch=32, step_size=0.0, iterations=10)


def test_train_separates_blobs():
    data = make_blobs_dataset(512, seed=1)
    model = train(SgdConfig(global_batch=32, step_size=0.1, iterations=500, seed=2), data)
    assert model.t == 500
    assert accuracy(model, data) >= 0.99


def test_zero_iterations_returns_initial_model():
    data = make_blobs_dataset(64, seed=1)
    config = SgdConfig(global_batch=16, step_size=0.1, iterations=0, seed=4)
    model = train(config, data)
    initial = init_model((2, config.hidden_units, 2), np.random.default_rng(4))
    np.testing.assert_array_equal(model.w, initial.w)
    assert model.t == 0


def test_training_is_seeded():
    data = make_blobs_dataset(256, seed=1)
    config = SgdConfig(global_batch=32, step_size=0.1, iterations=50, seed=9)
    np.testing.assert_array_equal(train(config, data).w, train(config, data).w)
    other = train(SgdConfig(global_batch=32, step_size=0.1, iterations=50, seed=10), data)
    assert not np.array_equal(train(config, data).w, other.w)


def test_dataset_smaller_than_batch_rejected():
    with pytest.raises(ModelInvariantError):
        train(SgdConfig(global_batch=64, step_size=0.1, iterations=1), make_blobs_dataset(32))


def test_single_worker_parallel_is_train():
    data = make_blobs_dataset(256, seed=1)
    config = SgdConfig(global_batch=32, step_size=0.1, iterations=100, seed=5)
    np.testing.assert_array_equal(parallel_train(config, data).w, train(config, data).w)


def test_parallel_workers_match_sequential():
    data = make_blobs_dataset(256, num_classes=3, seed=1)
    reference = train(SgdConfig(global_batch=32, step_size=0.1, iterations=200, seed=5), data)
    for workers in (2, 4, 8):
        config = SgdConfig(global_batch=32, step_size=0.1, iterations=200, n_workers=workers, seed=5)
        result = parallel_train(config, data)
        assert result.t == reference.t
        assert max_relative_difference(result.w, reference.w) <= 1e-6


def test_parallel_result_independent_of_thread_count():
    data = make_blobs_dataset(256, seed=1)
    config = SgdConfig(global_batch=32, step_size=0.1, iterations=50, n_workers=4, seed=5)
    np.testing.assert_array_equal(parallel_train(config, data, max_workers=1).w,
                                  parallel_train(config, data, max_workers=4).w)


def test_split_and_evaluate():
    data = make_blobs_dataset(100, seed=2)
    train_set, validation_set = train_validation_split(data, 0.2, seed=2)
    assert len(train_set) == 80
    assert len(validation_set) == 20
    metrics = evaluate(ModelState.zeros((2, 4, 2)), validation_set)
    assert metrics['loss'] == pytest.approx(np.log(2.0))
    assert 0.0 <= metrics['accuracy'] <= 1.0


def test_batch_step_sweep_pattern():
    data = make_blobs_dataset(600, seed=3)
    train_set, validation_set = train_validation_split(data, 0.25, seed=3)
    sweep = batch_step_sweep(train_set, validation_set, 16, 0.05, 120, [1, 2, 4], seed=6)
    assert list(sweep['k']) == [1, 2, 4]
    assert list(sweep['global_batch']) == [16, 32, 64]
    assert list(sweep['step_size']) == pytest.approx([0.05, 0.1, 0.2])
    assert list(sweep['iterations']) == [120, 60, 30]
    assert not sweep['diverged'].any()
    assert sweep.attrs['reference'][0]['accuracy_pct'] == 57.2

    k1 = train(SgdConfig(global_batch=16, step_size=0.05, iterations=120, seed=6), train_set)
    assert sweep['validation_accuracy'][0] == accuracy(k1, validation_set)


def test_batch_step_sweep_preconditions():
    data = make_blobs_dataset(100, seed=3)
    with pytest.raises(ModelInvariantError):
        batch_step_sweep(data, data, 16, 0.05, 120, [8])
    with pytest.raises(ModelInvariantError):
        batch_step_sweep(data, data, 8, 0.05, 100, [3])


def test_batch_step_sweep_records_divergence():
    data = make_blobs_dataset(200, seed=3)
    real_train = sgdcore.train

    def flaky_train(config, dataset):
        if config.global_batch > 16:
            raise NumericDivergenceError("loss or gradient is not finite", iteration=4)
        return real_train(config, dataset)

    with mock.patch.object(sgdcore, 'train', side_effect=flaky_train):
        sweep = batch_step_sweep(data, data, 16, 0.05, 40, [1, 2])
    assert list(sweep['diverged']) == [False, True]
    assert np.isnan(sweep['validation_accuracy'][1])
    assert "iteration 4" in sweep['error'][1]


if __name__ == "__main__":
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith("test_") and callable(fn)]
    print("🧪 Toy data-parallel SGD tests")
    print("=" * 60)
    for name, fn in tests:
        fn()
        print(f"✅ {name}")
    print(f"\n🎉 {len(tests)} tests passed")
