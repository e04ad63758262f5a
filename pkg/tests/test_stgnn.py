import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stgf.core import GaussianBelief, TrajectoryHistory, is_spd
from stgf.sim_data import ScenarioConfig, generate
from stgf.stgnn import (
    PARAM_NAMES,
    EmptyDataset,
    HistoryTooShort,
    ModelParams,
    ProcessNoise,
    RaggedHistories,
    TrainConfig,
    backward,
    forward,
    loss,
    loss_and_grad,
    lstm_encode_step,
    predict,
    propagate_uncertainty,
    train,
)
from stgf.stgnn.layers import attention_scores, gat_layer
from stgf.stgnn.params import ModelFormatError, load_params, save_params

from .conftest import spd3

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@pytest.fixture
def params():
    return ModelParams.initialize(5, scale=0.5)


def test_param_shapes_and_names():
    p = ModelParams.initialize(0)
    assert PARAM_NAMES == (
        "enc.w_ih", "enc.w_hh", "enc.b", "gat1.w", "gat1.a", "gat2.w", "gat2.a",
        "dec.init", "dec.w_ih", "dec.w_hh", "dec.b", "out.w", "out.b",
    )
    assert p["gat1.w"].shape == (32, 16) and p["gat1.a"].shape == (32,)
    assert p["gat2.w"].shape == (16, 32) and p["gat2.a"].shape == (64,)
    assert p["dec.init"].shape == (64, 32) and p["out.w"].shape == (32, 3)
    assert all(np.all(np.abs(p[n]) <= 0.1) for n in PARAM_NAMES)


# -- encoder -------------------------------------------------------------------

def test_encoder_zero_params_gives_zero_hidden():
    p = ModelParams.zeros()
    h, c = lstm_encode_step(np.zeros(32), np.zeros(32), [1.0, -2.0, 3.0], p)
    np.testing.assert_array_equal(h, 0.0)


def test_encoder_converges_to_fixed_point_on_zero_motion():
    p = ModelParams.initialize(11)
    h, c = np.zeros(32), np.zeros(32)
    diffs = []
    for _ in range(300):
        h_new, c = lstm_encode_step(h, c, np.zeros(3), p)
        diffs.append(np.linalg.norm(h_new - h))
        h = h_new
    tail = np.array(diffs[20:])
    assert np.all(np.diff(tail) <= 1e-15)
    assert diffs[-1] < 1e-10


@given(arrays(np.float64, 3, elements=finite), arrays(np.float64, 32, elements=st.floats(-1, 1)))
@settings(max_examples=50, deadline=None)
def test_encoder_hidden_is_bounded(delta, h0):
    p = ModelParams.initialize(2, scale=3.0)
    h, _ = lstm_encode_step(h0, np.zeros(32), delta, p)
    assert np.all(np.abs(h) < 1.0)


# -- graph attention -------------------------------------------------------------

def test_attention_single_node():
    alpha, _ = attention_scores(np.ones((1, 32)), np.ones((32, 16)), np.ones(32))
    np.testing.assert_array_equal(alpha, [[1.0]])


def test_attention_identical_neighbours_split_evenly(rng):
    m = np.repeat(rng.normal(size=(1, 32)), 2, axis=0)
    alpha, _ = attention_scores(m, rng.normal(size=(32, 16)), rng.normal(size=32))
    np.testing.assert_allclose(alpha, 0.5, rtol=0, atol=1e-15)


def test_attention_zero_weights_uniform(rng):
    m = rng.normal(size=(5, 32))
    alpha, _ = attention_scores(m, np.zeros((32, 16)), np.zeros(32))
    np.testing.assert_allclose(alpha, 0.2, rtol=0, atol=1e-15)


@given(arrays(np.float64, (6, 32), elements=finite), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_attention_rows_are_distributions(m, seed):
    g = np.random.default_rng(seed)
    alpha, _ = attention_scores(m, g.normal(size=(32, 16)), g.normal(size=32))
    assert np.all(alpha >= 0)
    assert np.max(np.abs(alpha.sum(axis=-1) - 1.0)) < 1e-9


def test_attention_respects_mask(rng):
    mask = np.eye(4, dtype=bool) | np.eye(4, k=1, dtype=bool) | np.eye(4, k=-1, dtype=bool)
    alpha, _ = attention_scores(rng.normal(size=(4, 32)), rng.normal(size=(32, 16)), rng.normal(size=32), mask)
    assert np.all(alpha[~mask] == 0)
    np.testing.assert_allclose(alpha.sum(axis=-1), 1.0)


def test_gat_zero_weights_zero_output(rng):
    out, _ = gat_layer(rng.normal(size=(3, 32)), np.zeros((32, 16)), np.zeros(32))
    np.testing.assert_array_equal(out, 0.0)


def test_gat_isolated_node(rng):
    m = rng.normal(size=(1, 32))
    w = rng.normal(size=(32, 16))
    out, _ = gat_layer(m, w, rng.normal(size=32))
    np.testing.assert_allclose(out, np.maximum(m @ w, 0.0))


def test_gat_permutation_equivariant(rng):
    m = rng.normal(size=(5, 32))
    w, a = rng.normal(size=(32, 16)), rng.normal(size=32)
    perm = rng.permutation(5)
    out, _ = gat_layer(m, w, a)
    out_p, _ = gat_layer(m[perm], w, a)
    np.testing.assert_allclose(out_p, out[perm], rtol=0, atol=1e-12)


# -- forward -------------------------------------------------------------------------

def _histories(positions):
    return [
        TrajectoryHistory(0, i, tuple((t, GaussianBelief(p, np.eye(3))) for t, p in enumerate(track)))
        for i, track in enumerate(positions)
    ]


def test_forward_zero_params_returns_last_position(rng):
    pos = rng.normal(size=(3, 6, 3))
    np.testing.assert_array_equal(forward(_histories(pos), ModelParams.zeros()), pos[:, -1])


def test_forward_single_object(params, rng):
    out = forward(_histories(rng.normal(size=(1, 4, 3))), params)
    assert out.shape == (1, 3) and np.all(np.isfinite(out))


def test_forward_permutation_equivariant(params, rng):
    pos = np.cumsum(rng.normal(size=(5, 7, 3)), axis=1)
    perm = rng.permutation(5)
    np.testing.assert_allclose(predict(pos[perm], params), predict(pos, params)[perm], rtol=0, atol=1e-9)


@given(arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)))
@settings(max_examples=30, deadline=None)
def test_forward_translation_covariant(offset):
    params = ModelParams.initialize(5, scale=0.5)
    pos = np.cumsum(np.random.default_rng(3).normal(size=(4, 6, 3)), axis=1)
    shifted = predict(pos + offset, params)
    np.testing.assert_allclose(shifted, predict(pos, params) + offset, rtol=0, atol=1e-9)


def test_forward_preconditions(params):
    b = GaussianBelief(np.zeros(3), np.eye(3))
    h1 = TrajectoryHistory(0, 0, ((0, b), (1, b), (2, b)))
    h2 = TrajectoryHistory(0, 1, ((1, b), (2, b), (3, b)))
    with pytest.raises(RaggedHistories):
        forward([h1, h2], params)
    with pytest.raises(HistoryTooShort):
        predict(np.zeros((2, 1, 3)), params)


# -- uncertainty and loss ------------------------------------------------------------

def test_propagate_uncertainty_paper_values():
    np.testing.assert_array_equal(
        propagate_uncertainty(10000 * np.eye(3), ProcessNoise.isotropic(2000.0)), 12000 * np.eye(3)
    )


@given(spd3, spd3)
def test_propagate_uncertainty_sum_of_spd(p, q):
    out = propagate_uncertainty(p, q)
    assert is_spd(out, 1e-9)
    np.testing.assert_array_equal(propagate_uncertainty(p, np.zeros((3, 3))), p)


def test_loss_examples():
    y = np.array([[1.0, 2.0, 3.0]])
    assert loss(y, y) == 0.0
    assert loss([[3.0, 4.0, 0.0]], [[0.0, 0.0, 0.0]]) == 25.0
    assert loss([[3.0, 4.0, 0.0], [1.0, 1.0, 1.0]], [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]) == 12.5
    with pytest.raises(ValueError):
        loss(np.zeros((2, 3)), np.zeros((3, 3)))


# -- backward -------------------------------------------------------------------------

def test_backward_zero_when_prediction_is_truth(params, rng):
    pos = np.cumsum(rng.normal(size=(3, 5, 3)), axis=1)
    grads = backward(_histories(pos), predict(pos, params), params)
    for name in PARAM_NAMES:
        np.testing.assert_array_equal(grads[name], 0.0)


def test_backward_unused_recurrent_weights_get_zero_gradient(params, rng):
    # with two frames the encoder runs once from a zero state, so enc.w_hh never matters
    pos = rng.normal(size=(3, 2, 3))
    _, grads = loss_and_grad(pos, rng.normal(size=(3, 3)), params)
    assert np.all(grads["enc.w_hh"] == 0.0)
    assert np.any(grads["dec.w_hh"] != 0.0)


def test_backward_matches_finite_differences_on_sampled_entries(params, rng):
    pos = np.cumsum(rng.normal(size=(2, 2, 4, 3)), axis=2)
    y = rng.normal(size=(2, 2, 3))
    _, grads = loss_and_grad(pos, y, params)
    eps = 1e-5
    for name in PARAM_NAMES:
        t = params.tensors[name]
        flat = t.reshape(-1)
        for idx in rng.choice(flat.size, size=min(flat.size, 12), replace=False):
            old = flat[idx]
            flat[idx] = old + eps
            lp, _ = loss_and_grad(pos, y, params)
            flat[idx] = old - eps
            lm, _ = loss_and_grad(pos, y, params)
            flat[idx] = old
            fd = (lp - lm) / (2 * eps)
            scale = max(np.max(np.abs(grads[name])), 1e-12)
            assert abs(grads[name].reshape(-1)[idx] - fd) / scale < 1e-4, name


# -- training and persistence ------------------------------------------------------

@pytest.fixture(scope="module")
def small_dataset():
    cfg = ScenarioConfig.default("mpl", seed=4, n_views=2, n_frames=6, interaction_strength=0.0)
    return generate(cfg, 6)


def test_train_zero_epochs_returns_initialization(small_dataset):
    res = train(small_dataset, TrainConfig(epochs=0, seed=9))
    init = ModelParams.initialize(9)
    assert res.loss_curve == []
    for n in PARAM_NAMES:
        np.testing.assert_array_equal(res.params[n], init[n])


def test_train_is_deterministic(small_dataset):
    cfg = TrainConfig(epochs=3, seed=1, batch_size=4)
    a, b = train(small_dataset, cfg), train(small_dataset, cfg)
    assert a.params.to_json() == b.params.to_json()
    assert a.loss_curve == b.loss_curve


@pytest.mark.parametrize("optimizer", ["sgd", "momentum", "adam"])
def test_train_reduces_loss(small_dataset, optimizer):
    lr = {"sgd": 0.05, "momentum": 0.01, "adam": 3e-3}[optimizer]
    res = train(small_dataset, TrainConfig(epochs=15, seed=0, batch_size=4, learning_rate=lr, optimizer=optimizer))
    assert res.loss_curve[-1] < res.loss_curve[0]


def test_train_empty_dataset():
    with pytest.raises(EmptyDataset):
        train([], TrainConfig(epochs=1))


def test_params_file_roundtrip(tmp_path):
    p = ModelParams.initialize(42)
    path = tmp_path / "w.json"
    save_params(p, path)
    doc = json.loads(path.read_text())
    assert doc["format_version"] == 1 and doc["hidden_dim"] == 32 and doc["seed"] == 42
    assert list(doc["tensors"]) == sorted(PARAM_NAMES)
    q = load_params(path)
    for n in PARAM_NAMES:
        np.testing.assert_array_equal(p[n], q[n])
    assert q.to_json() == path.read_text()


def test_params_file_rejects_bad_documents(tmp_path):
    path = tmp_path / "w.json"
    doc = json.loads(ModelParams.initialize(0).to_json())
    doc["format_version"] = 2
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_params(path)
    doc["format_version"] = 1
    doc["tensors"]["out.w"]["shape"] = [3, 32]
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_params(path)
    path.write_text("{not json")
    with pytest.raises(ModelFormatError):
        load_params(path)
