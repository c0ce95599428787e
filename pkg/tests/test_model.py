import numpy as np
import pytest

from macbig import layers as L
from macbig import model as M

from conftest import random_docs


def test_build_counts(default_model):
    hp, _ = default_model
    params = M.build(hp, 18352, L.make_rng(0))
    assert params.embedding.size == 1_835_200
    assert not params.embedding[0].any()
    for level in (params.word, params.sentence):
        assert [c.parameter_count() for c in level.convs] == [38528, 51328, 64128]
        assert level.gru_fwd.parameter_count() + level.gru_bwd.parameter_count() == 2 * 3 * (128 * 100 + 100**2 + 100)


def test_build_is_seeded():
    hp = M.HyperParams()
    a, b = M.build(hp, 30, L.make_rng(5)), M.build(hp, 30, L.make_rng(5))
    for (k, x), y in zip(a.named().items(), b.named().values()):
        np.testing.assert_array_equal(x, y, err_msg=k)


def test_encode_sentence_shapes(default_model):
    hp, params = default_model
    c, w = M.encode_sentence(np.arange(200) % 50, params, hp)
    assert c.shape == (100,) and w.shape == (65,)


def test_all_pad_sentence_gives_uniform_word_attention(default_model):
    hp, params = default_model
    _, w = M.encode_sentence(np.zeros(200, dtype=int), params, hp)
    np.testing.assert_allclose(w, np.full(65, 1 / 65), rtol=1e-5)


def test_sentence_level_shapes(default_model):
    hp, params = default_model
    res = M.forward_batch(np.ones((1, 15, 200), dtype=int), params, hp)
    sent = dict(res.shapes[len(M.REFERENCE_WORD_TABLE):])
    assert sent["TimeDistributed (Model)"] == (15, 100)
    assert [sent[f"Conv1D_{i}"][0] for i in (1, 2, 3)] == [13, 12, 11]
    assert [sent[f"MaxPooling1D_{i}"][0] for i in (1, 2, 3)] == [4, 4, 3]
    assert sent["Concatenate"] == (11, 128) and sent["MaxPooling1D_4"] == (3, 128)
    assert sent["Bidirectional_GRU"] == (3, 200) and sent["Dense"] == (3,)
    assert res.probs.shape == (1, 3) and res.sentence_weights.shape == (1, 3)


def test_probs_and_weights_are_distributions(default_model):
    hp, params = default_model
    docs = random_docs(L.make_rng(1), 8, hp, 50)
    res = M.forward_batch(docs, params, hp)
    np.testing.assert_allclose(res.probs.sum(axis=1), 1, atol=1e-5)
    np.testing.assert_allclose(res.word_weights.sum(axis=2), 1, atol=1e-5)
    np.testing.assert_allclose(res.sentence_weights.sum(axis=1), 1, atol=1e-5)


def test_inference_is_deterministic(tiny):
    hp, params, docs = tiny
    a = M.forward_batch(docs, params, hp).probs
    b = M.forward_batch(docs, params, hp).probs
    np.testing.assert_array_equal(a, b)


def test_batch_matches_single_document(tiny):
    hp, params, docs = tiny
    batch = M.forward_batch(docs, params, hp).probs
    for i, d in enumerate(docs):
        np.testing.assert_allclose(M.forward(d, params, hp)[0], batch[i], rtol=1e-6)


def test_training_mode_uses_dropout(tiny):
    hp, params, docs = tiny
    a = M.forward_batch(docs, params, hp, training=True, rng=L.make_rng(0)).probs
    b = M.forward_batch(docs, params, hp).probs
    assert not np.allclose(a, b)


@pytest.mark.parametrize("probs,label", [([0.2, 0.5, 0.3], 1), ([0.4, 0.4, 0.2], 0)])
def test_predict_from_probs(probs, label):
    assert M.predict_from_probs(probs) == label


def test_input_validation(tiny):
    hp, params, docs = tiny
    with pytest.raises(ValueError, match="shaped"):
        M.forward_batch(docs[:, :2], params, hp)
    bad = docs.copy()
    bad[0, 0, 0] = 20
    with pytest.raises(ValueError, match="out of range"):
        M.forward_batch(bad, params, hp)


def test_unique_rows_roundtrip():
    a = np.array([[1, 2], [0, 0], [1, 2], [3, 4], [0, 0]])
    rows, inv = M.unique_rows(a)
    np.testing.assert_array_equal(rows[inv], a)
    np.testing.assert_array_equal(rows, [[1, 2], [0, 0], [3, 4]])


def test_parameter_report_totals():
    hp = M.HyperParams()
    rows = M.parameter_report(M.build(hp, 18352, L.make_rng(0)), hp)
    by = {(r.level, r.name): r for r in rows}
    assert by[("sentence", "TimeDistributed (Model)")].count == 2_156_884
    assert by[("sentence", "TimeDistributed (Model)")].reference_count - 183_200 + 137_400 == 2_156_884
    mismatched = {(r.level, r.name) for r in rows if r.matches is False}
    assert mismatched == {("word", "Bidirectional_GRU"), ("sentence", "Bidirectional_GRU"),
                          ("sentence", "TimeDistributed (Model)")}
    text = M.format_report(rows)
    assert "137,400" in text and "183,200" in text and "✗ *" in text


def test_receptive_fields_cover_tokens():
    hp = M.HyperParams()
    fields = M.receptive_fields(hp)
    assert len(fields) == 65
    assert fields[0][0] == 0
    # the weights of all positions end up on tokens, conserving mass
    w = np.random.default_rng(0).dirichlet(np.ones(65))
    assert M.token_weights(w, hp).sum() == pytest.approx(1.0)


def test_trace_export(default_model):
    hp, params = default_model
    doc = np.zeros((15, 200), dtype=int)
    doc[0, :3] = [2, 3, 4]
    probs, trace = M.forward(doc, params, hp, tokens=[["a", "b", "c"]])
    d = trace.to_dict(hp, "a b c")
    assert len(d["sentences"]) == 1 and d["sentences"][0]["tokens"] == ["a", "b", "c"]
    assert len(d["sentence_weights"]) == 3
    assert sum(d["sentences"][0]["word_weights"]) == pytest.approx(1, abs=1e-5)
    assert d["predicted"] in M.LABELS
