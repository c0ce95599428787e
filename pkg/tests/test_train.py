import math

import numpy as np
import pytest

from macbig import layers as L
from macbig import metrics
from macbig import model as M
from macbig import train as T


def test_cross_entropy_examples():
    assert T.cross_entropy(np.array([0.0, 1.0, 0.0]), 1) == 0.0
    assert T.cross_entropy(np.full(3, 1 / 3), 2) == pytest.approx(math.log(3))
    assert T.cross_entropy(np.array([1.0, 0.0, 0.0]), 1) == pytest.approx(16.118, abs=1e-3)


def test_regularized_cost_examples(tiny):
    hp, params, _ = tiny
    cfg = T.TrainConfig(l2=0.0)
    assert T.regularized_cost(0.7, params, cfg, 4) == 0.7
    cfg = T.TrainConfig(l2=0.001)
    p = params.copy()
    for k, w in p.named().items():
        w[...] = 0
    p.output.W[0, 0] = math.sqrt(200)
    assert T.regularized_cost(1.0, p, cfg, 1) == pytest.approx(1.1)


def test_penalty_is_quadratic(tiny):
    hp, params, _ = tiny
    cfg = T.TrainConfig()
    base = T.l2_sum(params, cfg)
    doubled = params.copy()
    for k, w in doubled.named().items():
        w *= 2
    assert T.l2_sum(doubled, cfg) == pytest.approx(4 * base, rel=1e-6)


def test_regularized_scope():
    cfg = T.TrainConfig()
    assert T.is_regularized("word.conv3.W", cfg)
    assert T.is_regularized("sentence.gru_bwd.U", cfg)
    assert not T.is_regularized("word.conv3.b", cfg)
    assert not T.is_regularized("word.attention.ctx", cfg)
    assert not T.is_regularized("embedding", cfg)


def test_duplicate_sample_is_mean_reweighting(tiny):
    hp, params, docs = tiny
    params = params.astype(np.float64)
    cfg = T.TrainConfig(l2=0.0)
    hp.dropout = 0.0
    labels = np.array([0, 1, 2, 1])
    _, g_once = T.backprop_batch(docs[:2], labels[:2], params, hp, cfg)
    _, g_twice = T.backprop_batch(docs[[0, 0, 1]], labels[[0, 0, 1]], params, hp, cfg)
    _, g0 = T.backprop_batch(docs[:1], labels[:1], params, hp, cfg)
    _, g1 = T.backprop_batch(docs[1:2], labels[1:2], params, hp, cfg)
    for k in g_once:
        np.testing.assert_allclose(g_once[k], (g0[k] + g1[k]) / 2, atol=1e-12, err_msg=k)
        np.testing.assert_allclose(g_twice[k], (2 * g0[k] + g1[k]) / 3, atol=1e-12, err_msg=k)


def test_l2_gradient_difference(tiny):
    hp, params, docs = tiny
    params = params.astype(np.float64)
    labels = np.array([0, 1, 2, 1])
    lam = 0.001
    _, g0 = T.backprop_batch(docs, labels, params, hp, T.TrainConfig(l2=0.0), L.make_rng(1))
    _, g1 = T.backprop_batch(docs, labels, params, hp, T.TrainConfig(l2=lam), L.make_rng(1))
    cfg = T.TrainConfig()
    for k, w in params.named().items():
        expected = lam / 4 * w if T.is_regularized(k, cfg) else 0
        np.testing.assert_allclose(g1[k] - g0[k], expected, atol=1e-15, err_msg=k)


def test_adam_zero_gradient_keeps_params(tiny):
    hp, params, _ = tiny
    before = params.copy()
    grads = {k: np.zeros_like(w) for k, w in params.named().items()}
    T.adam_step(params, grads, T.AdamState(), T.TrainConfig())
    for k, w in params.named().items():
        np.testing.assert_array_equal(w, before.named()[k])


@pytest.mark.parametrize("g", [0.5, -3.0, 1e-3])
def test_adam_first_step_closed_form(tiny, g):
    hp, params, _ = tiny
    params = params.astype(np.float64)
    cfg = T.TrainConfig(lr=1e-4)
    w0 = params.output.b.copy()
    grads = {k: np.zeros_like(w) for k, w in params.named().items()}
    grads["output.b"][:] = g
    state = T.adam_step(params, grads, T.AdamState(), cfg)
    np.testing.assert_allclose(params.output.b - w0, -1e-4 * g / (abs(g) + 1e-8), rtol=1e-12)
    assert state.t == 1 and state.m["output.b"].shape == w0.shape


def test_fifty_steps_lower_cost(tiny):
    hp, params, docs = tiny
    hp.dropout = 0.0
    labels = np.array([0, 1, 2, 0])
    cfg = T.TrainConfig(lr=1e-2)
    c0, _ = T.backprop_batch(docs, labels, params, hp, cfg)
    state = T.AdamState()
    for _ in range(50):
        _, g = T.backprop_batch(docs, labels, params, hp, cfg)
        T.adam_step(params, g, state, cfg)
    c1, _ = T.backprop_batch(docs, labels, params, hp, cfg)
    assert c1 < c0


def test_train_zero_epochs(tiny):
    hp, params, docs = tiny
    labels = np.array([0, 1, 2, 0])
    before = params.copy()
    res = T.train((docs, labels), (docs, labels), hp, T.TrainConfig(epochs=0), params)
    assert res.history == []
    for k, w in res.params.named().items():
        np.testing.assert_array_equal(w, before.named()[k])


def _run(tiny, seed):
    hp, params, docs = tiny
    p = params.copy()
    labels = np.array([0, 1, 2, 0])
    cfg = T.TrainConfig(epochs=4, lr=1e-2, seed=seed)
    return T.train((docs, labels), (docs[:2], labels[:2]), hp, cfg, p, L.make_rng(seed))


def test_train_determinism_and_best_snapshot(tiny):
    a, b = _run(tiny, 3), _run(tiny, 3)
    assert T.history_to_csv(a.history) == T.history_to_csv(b.history)
    for k, w in a.final_params.named().items():
        np.testing.assert_array_equal(w, b.final_params.named()[k])
    assert a.best_val_acc == max(r.val_acc for r in a.history)
    assert a.history[a.best_epoch - 1].val_acc == a.best_val_acc
    hp, _, docs = tiny
    _, acc, _ = T.evaluate_loss_acc(docs[:2], [0, 1], a.params, hp)
    assert acc == a.best_val_acc


def test_history_csv_roundtrip(tiny):
    h = _run(tiny, 0).history
    assert T.history_from_csv(T.history_to_csv(h)) == h


def test_split_examples():
    y = np.repeat([0, 1, 2], 100)
    parts = T.split_stratified(y, (0.8, 0.05, 0.15), 0)
    assert [np.bincount(y[p]).tolist() for p in parts] == [[80] * 3, [5] * 3, [15] * 3]
    y = np.repeat([0, 1, 2], [1299, 1164, 1655])
    parts = T.split_stratified(y, (0.8, 0.05, 0.15), 4)
    assert [np.bincount(y[p]).tolist() for p in parts] == [[1039, 931, 1324], [65, 58, 83], [195, 175, 248]]


@pytest.mark.parametrize("counts", [(11, 10, 11), (6, 7, 40), (100, 1000, 17)])
def test_split_is_partition_within_one_sample(counts):
    y = np.repeat(np.arange(3), counts)
    fr = np.array([0.8, 0.05, 0.15])
    parts = T.split_stratified(y, fr, 9)
    allidx = np.concatenate(parts)
    assert sorted(allidx.tolist()) == list(range(len(y)))
    for c, n in enumerate(counts):
        got = np.array([np.sum(y[p] == c) for p in parts])
        assert np.all(got >= 1) and np.all(np.abs(got - n * fr) < 1 + 1e-9)


def test_split_three_sample_class_gets_one_each():
    # the non-empty requirement wins over the one-sample tolerance here
    y = np.repeat([0, 1, 2], [3, 20, 20])
    parts = T.split_stratified(y, (0.8, 0.05, 0.15), 0)
    assert [int(np.sum(y[p] == 0)) for p in parts] == [1, 1, 1]


def test_split_rejects_tiny_class():
    with pytest.raises(ValueError, match="class 1"):
        T.split_stratified(np.array([0, 0, 0, 1, 1, 2, 2, 2]), (0.8, 0.05, 0.15), 0)


def test_split_depends_on_seed():
    y = np.repeat([0, 1, 2], 40)
    a = T.split_stratified(y, (0.8, 0.05, 0.15), 0)
    b = T.split_stratified(y, (0.8, 0.05, 0.15), 1)
    assert not np.array_equal(a[2], b[2])


def test_cross_validate_single_fold_equals_fold_report():
    hp = M.HyperParams(max_sentences=4, max_tokens=9, embed_dim=5, filters=4, kernel_sizes=(1, 2),
                       pool_size=2, gru_hidden=3, attn_dim=4)
    rng = L.make_rng(0)
    docs = rng.integers(0, 20, size=(30, 4, 9))
    y = np.repeat([0, 1, 2], 10)
    res = T.cross_validate(docs, y, hp, T.TrainConfig(folds=1, epochs=2), 20)
    assert res.mean == metrics.average_headlines([res.folds[0].test_report])
    assert res.mean["Accuracy"] == res.folds[0].test_report.headline()["Accuracy"]
    assert set(res.mean) >= {"Accuracy", "Precision", "Recall", "F1 score"}


def test_config_validation():
    with pytest.raises(ValueError, match="sum"):
        T.TrainConfig(train_frac=0.9)
    with pytest.raises(ValueError, match="unknown"):
        T.TrainConfig.from_dict({"learning_rate": 1})
    assert T.TrainConfig.from_dict(T.TrainConfig(lr=0.5).to_dict()) == T.TrainConfig(lr=0.5)
