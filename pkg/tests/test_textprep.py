import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macbig.textprep import (DataError, Lemmatizer, Preprocessor, RawRecord, Vocabulary, build_vocab,
                             clean_stage1, clean_stage2, load_embeddings, parse_label, read_jsonl,
                             split_sentences, vectorize, vectorize_sentences)
from macbig.textprep.embeddings import LOADED, RANDOM, ZERO_PAD


@pytest.mark.parametrize("text,expected", [
    ("RT @user: Check https://t.co/x NOW!! 😷", "check now"),
    ("", ""),
    ("Stay Safe", "stay safe"),
    ("visit www.who.int for nan updates", "visit for updates"),
    ("banana nanny", "banana nanny"),
    ("#StayHome   now", "#stayhome now"),
])
def test_stage1(text, expected):
    assert clean_stage1(text) == expected


tweet_chars = st.sampled_from(list("abcnNAt RT@#:/._-!?'\"0129 \t\nhttpsw😷é")) | st.characters()


@settings(max_examples=1000, deadline=None)
@given(st.lists(tweet_chars | st.sampled_from(["nan", "NaN", "http://", "www.", "@x", "RT @a:"]), max_size=30)
       .map("".join))
def test_stage1_idempotent(text):
    once = clean_stage1(text)
    assert clean_stage1(once) == once


def test_stage2_examples():
    assert clean_stage2(["the", "doctors", "are", "#heroes", "running"]) == ["doctor", "run"]
    assert clean_stage2(["#covid19"]) == []
    assert clean_stage2([]) == []


@pytest.mark.parametrize("word,lemma", [
    ("doctors", "doctor"), ("cities", "city"), ("boxes", "box"), ("running", "run"),
    ("hoped", "hope"), ("virus", "virus"), ("children", "child"), ("was", "be"), ("kiss", "kiss"),
])
def test_lemmatizer(word, lemma):
    assert Lemmatizer()(word) == lemma


@pytest.mark.parametrize("text,expected", [
    ("i am fine. stay safe!", ["i am fine.", "stay safe!"]),
    ("dr. smith tested positive.", ["dr. smith tested positive."]),
    ("no punctuation here", ["no punctuation here"]),
    ("what?! really... ok", ["what?!", "really...", "ok"]),
    ("", []),
])
def test_split_sentences(text, expected):
    assert split_sentences(text) == expected


def test_preprocessor_drops_empty_sentences():
    assert Preprocessor().sentences("The vaccine works. http://x.co! Hospitals overwhelmed.") == [
        ["vaccin", "work"], ["hospit", "overwhelm"]]


def test_build_vocab_examples():
    v = build_vocab([["a", "b", "a"], ["a"]], max_size=4)
    assert v.index == {"<pad>": 0, "<unk>": 1, "a": 2, "b": 3}
    v = build_vocab([["y", "x", "y", "x"]], max_size=10)
    assert v.words[2:] == ["x", "y"]
    v = build_vocab([["p", "q", "r", "s", "t"]], max_size=3)
    assert len(v) == 3 and v.words[2] == "p"


def test_vocab_save_load(tmp_path):
    v = build_vocab([["b", "a", "a"]])
    v.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt") == v


def test_vectorize_padding_and_oov():
    vocab = build_vocab([["fine", "safe"]])
    rec = RawRecord("I am fine. Safe and unknownword!", 2)
    doc = vectorize(rec, vocab)
    assert doc.grid.shape == (15, 200) and doc.grid.dtype == np.int32
    assert doc.grid[0, 0] == vocab["fine"]
    assert doc.grid[1, :2].tolist() == [vocab["safe"], 1]
    assert not doc.grid[2:].any() and not doc.grid[0, 1:].any()
    assert doc.label == 2


def test_vectorize_truncation():
    vocab = build_vocab([["w"]])
    sents = [["w"] * 250 for _ in range(20)]
    doc = vectorize_sentences(sents, vocab)
    assert len(doc.tokens) == 15 and all(len(t) == 200 for t in doc.tokens)
    assert np.all(doc.grid == vocab["w"])


def test_vectorize_empty():
    doc = vectorize(RawRecord("https://t.co/abc", None), build_vocab([["w"]]))
    assert doc.empty and not doc.grid.any()


@pytest.mark.parametrize("value,idx", [("negative", 0), ("Neutral", 1), ("positive", 2), (-1, 0), (0, 1), (1, 2)])
def test_parse_label(value, idx):
    assert parse_label(value) == idx


def test_read_jsonl_errors(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"text": "a", "label": 1}\n{"text": "b"}\n')
    with pytest.raises(DataError, match="line 2"):
        read_jsonl(p)
    p.write_text('{"text": "a", "label": 1}\n{oops\n')
    with pytest.raises(DataError, match="line 2"):
        read_jsonl(p)
    p.write_text('{"text": "a", "label": "great"}\n')
    with pytest.raises(DataError, match="line 1"):
        read_jsonl(p)


def _glove(tmp_path, lines):
    p = tmp_path / "g.txt"
    p.write_text("\n".join(lines) + "\n")
    return p


def test_embeddings(tmp_path):
    vocab = build_vocab([["good", "bad"]])
    values = [round(0.1 * i, 3) for i in range(100)]
    p = _glove(tmp_path, ["good " + " ".join(map(str, values)), "other " + " ".join(["1"] * 100)])
    table = load_embeddings(p, vocab)
    np.testing.assert_allclose(table.matrix[vocab["good"]], values, rtol=1e-6)
    assert table.provenance[vocab["good"]] == LOADED
    assert table.provenance[vocab["bad"]] == RANDOM
    assert table.provenance[0] == ZERO_PAD and not table.matrix[0].any()
    assert np.all(np.abs(table.matrix[vocab["bad"]]) <= 0.05)


def test_embeddings_bad_line(tmp_path):
    vocab = build_vocab([["good"]])
    p = _glove(tmp_path, ["good " + " ".join(["0.5"] * 100), "bad " + " ".join(["0.5"] * 99)])
    with pytest.raises(DataError, match="line 2"):
        load_embeddings(p, vocab)


def test_synthetic_corpus_is_balanced(synthetic_path):
    recs = read_jsonl(synthetic_path)
    assert len(recs) == 32
    assert np.bincount([r.label for r in recs]).tolist() == [11, 10, 11]
    assert len({r.id for r in recs}) == 32
