import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equiset import tensor as T
from equiset.datasets import Dataset, knapsack_success, make_dataset
from equiset.layers import ModelSpec, init_params, predict
from equiset.sympoly import check_equivariance
from equiset.training import (
    AdamState,
    NumericAbort,
    TrainConfig,
    adam_step,
    cross_entropy_per_element,
    default_config,
    evaluate,
    knapsack_predictions,
    lr_at,
    mse,
    smooth_l1,
    train,
)


def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState.zeros_like(p), 1e-3)
    assert p["w"].tolist() == [1.0, -2.0]


def test_adam_first_step_value():
    p = {"w": np.array([0.0])}
    adam_step(p, {"w": np.array([1.0])}, AdamState.zeros_like(p), 1e-3)
    assert abs(p["w"][0] - (-0.001 / (1 + 1e-8))) <= 1e-18


def test_adam_shape_mismatch():
    p = {"w": np.zeros(2)}
    with pytest.raises(ValueError):
        adam_step(p, {"w": np.zeros(3)}, AdamState.zeros_like(p), 1e-3)


def test_cross_entropy_values():
    assert abs(cross_entropy_per_element([[0.0, 0.0]], [1]).data.item() - math.log(2)) <= 1e-15
    assert cross_entropy_per_element([[0.0, 50.0]], [1]).data.item() <= 1e-20
    with pytest.raises(ValueError):
        cross_entropy_per_element([[0.0, 0.0]], [2])


@pytest.mark.parametrize("d,want", [(0.5, 0.125), (2.0, 1.5), (0.0, 0.0), (-2.0, 1.5)])
def test_smooth_l1_values(d, want):
    assert smooth_l1([[d]], [[0.0]]).data.item() == want


def test_mse_values():
    assert mse([[1.0, 2.0]], [[1.0, 2.0]]).data.item() == 0.0
    assert mse([[3.0, 4.0]], [[1.0, 2.0]]).data.item() == 4.0
    with pytest.raises(ValueError):
        mse([[1.0]], [[1.0, 2.0]])


def test_lr_schedule():
    cfg = TrainConfig(lr=1e-3, decay_factor=0.5, decay_every=100)
    assert lr_at(cfg, 0) == 1e-3 and lr_at(cfg, 99) == 1e-3 and lr_at(cfg, 100) == 5e-4
    cfg = TrainConfig(lr=1e-3, decay_factor=0.1, decay_every=50)
    assert math.isclose(lr_at(cfg, 100), 1e-5, rel_tol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(loss="hinge")


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_smooth_l1_grad_matches_finite_difference(p, t):
    if abs(abs(p - t) - 1.0) < 1e-3:
        return  # kink
    res = T.grad_check(lambda q: smooth_l1(q["p"], np.array([[t]])), {"p": np.array([[p]])})
    assert res.passed


def _linear_dataset(seed=0, N=64, n=3, k=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(N, n, k))
    w = np.array([[1.5], [-0.5]])
    return Dataset("quadratic", X, X @ w + 0.25)


def test_linear_fit_converges():
    spec = ModelSpec("PointNet", 1, 1, 2, 1)
    res = train(spec, _linear_dataset(), TrainConfig(lr=0.05, epochs=500, batch_size=64, decay_every=1000, loss="mse"))
    assert res.history[-1].train_loss <= 1e-6


def test_training_is_deterministic():
    ds = _linear_dataset(1)
    spec = ModelSpec("DeepSets", 2, 4, 2, 1)
    cfg = TrainConfig(epochs=3, batch_size=10, loss="mse", seed=4)
    a, b = train(spec, ds, cfg), train(spec, ds, cfg)
    assert repr(a.history) == repr(b.history)  # repr is exact for floats and treats nan as equal
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


def test_trained_model_stays_equivariant():
    ds = _linear_dataset(2)
    spec = ModelSpec("PointNetST", 3, 8, 2, 1)
    res = train(spec, ds, TrainConfig(epochs=3, loss="mse"))
    chk = check_equivariance(lambda X: predict(spec, res.params, X), 3, 2, 20, 0, batched=True)
    assert chk.deviation <= 1e-6


def test_nan_abort_names_epoch_and_batch():
    ds = _linear_dataset(3)
    ds.Y[5, 0, 0] = np.nan
    with pytest.raises(NumericAbort, match=r"epoch 0, batch \d+"):
        train(ModelSpec("PointNet", 1, 1, 2, 1), ds, TrainConfig(epochs=1, loss="mse"))


def test_history_fields():
    ds = _linear_dataset(4)
    res = train(ModelSpec("PointNet", 2, 4, 2, 1), ds, TrainConfig(epochs=4, loss="mse"), test=ds)
    assert [r.epoch for r in res.history] == [0, 1, 2, 3]
    assert res.history[-1].train_loss == res.history[-1].test_loss


def test_knapsack_zero_predictor():
    ds = make_dataset("knapsack", 0, 20, 6)
    spec = ModelSpec("PointNet", 1, 1, 4, 2)
    zero = {"0.A": np.zeros((4, 2)), "0.c": np.zeros(2)}
    _, rate = evaluate(spec, zero, ds)
    assert rate == np.mean(ds.v_star == 0)


def test_knapsack_oracle_logits_score_one():
    ds = make_dataset("knapsack", 1, 20, 6)
    logits = np.concatenate([np.zeros_like(ds.Y), 2 * ds.Y - 1], axis=2)
    pred = knapsack_predictions(logits)
    assert all(knapsack_success(p, inst) for p, inst in zip(pred, ds.knapsack_instances()))


def test_evaluate_order_invariant():
    ds = make_dataset("quadratic", 0, 12, 4, 2)
    spec = ModelSpec("DeepSets", 2, 4, 2, 1)
    params = init_params(spec, 0)
    perm = np.random.default_rng(0).permutation(12)
    a = evaluate(spec, params, ds)
    b = evaluate(spec, params, ds.subset(perm))
    assert math.isclose(a[0], b[0], rel_tol=1e-12)


def test_graphnet_trains_on_cached_aux():
    ds = make_dataset("fiedler", 0, 6, 16)
    spec = ModelSpec("GraphNet", 2, 4, 3, 1)
    res = train(spec, ds, default_config("fiedler", epochs=2))
    assert len(res.history) == 2 and "_aux" in ds.meta
    assert math.isfinite(res.history[-1].train_loss)


def test_default_configs():
    assert default_config("knapsack").loss == "cross_entropy"
    q = default_config("quadratic")
    assert (q.decay_factor, q.decay_every, q.batch_size) == (0.1, 50, 64)
    assert default_config("gcn-approx", epochs=5).epochs == 5
