"""Labelled JSON Lines records and the vocabulary/vectorization pipeline."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clean import Lemmatizer, clean_stage1, clean_stage2, default_abbreviations, default_stopwords
from .sentences import split_sentences

LABELS = ("negative", "neutral", "positive")
PAD, OOV = 0, 1
PAD_TOKEN, OOV_TOKEN = "<pad>", "<unk>"


class DataError(ValueError):
    """Malformed input data; ``line`` is 1-based when known."""

    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


def parse_label(value) -> int:
    if isinstance(value, bool):
        raise ValueError(f"invalid label {value!r}")
    if isinstance(value, str):
        key = value.strip().lower()
        if key in LABELS:
            return LABELS.index(key)
        raise ValueError(f"invalid label {value!r}")
    if isinstance(value, (int, float)) and value in (-1, 0, 1):
        return int(value) + 1
    raise ValueError(f"invalid label {value!r}")


@dataclass
class RawRecord:
    text: str
    label: int | None  # class index, or None for unlabelled text
    id: str | None = None
    country: str | None = None
    date: str | None = None

    @property
    def label_name(self):
        return None if self.label is None else LABELS[self.label]


def parse_record(obj, line=None, require_label=True) -> RawRecord:
    if not isinstance(obj, dict):
        raise DataError("expected a JSON object", line)
    text = obj.get("text")
    if not isinstance(text, str):
        raise DataError("missing or non-string \"text\"", line)
    if "label" not in obj:
        if require_label:
            raise DataError("missing \"label\"", line)
        label = None
    else:
        try:
            label = parse_label(obj["label"])
        except ValueError as e:
            raise DataError(str(e), line) from None
    rid = obj.get("id")
    return RawRecord(text, label, None if rid is None else str(rid), obj.get("country"), obj.get("date"))


def read_jsonl(path, require_label=True) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"invalid JSON ({e.msg})", i) from None
            rec = parse_record(obj, i, require_label)
            if rec.id is None:
                rec.id = str(len(records))
            records.append(rec)
    return records


@dataclass
class Preprocessor:
    """Sentence splitting plus both cleaning stages, with swappable word lists."""

    stopwords: frozenset = field(default_factory=default_stopwords)
    abbreviations: tuple = field(default_factory=default_abbreviations)
    lemmatizer: Lemmatizer = field(default_factory=Lemmatizer)

    def sentences(self, text: str) -> list:
        """Cleaned token lists, one per non-empty sentence."""
        out = []
        for sent in split_sentences(text, self.abbreviations):
            toks = clean_stage2(clean_stage1(sent).split(), self.stopwords, self.lemmatizer)
            if toks:
                out.append(toks)
        return out


class Vocabulary:
    """word -> index; 0 is padding, 1 is out-of-vocabulary."""

    def __init__(self, words):
        words = list(words)
        if words[:2] != [PAD_TOKEN, OOV_TOKEN]:
            words = [PAD_TOKEN, OOV_TOKEN] + [w for w in words if w not in (PAD_TOKEN, OOV_TOKEN)]
        if len(set(words)) != len(words):
            raise ValueError("duplicate words in vocabulary")
        self.words = words
        self.index = {w: i for i, w in enumerate(words)}

    def __len__(self):
        return len(self.words)

    def __getitem__(self, word) -> int:
        return self.index.get(word, OOV)

    def __contains__(self, word):
        return word in self.index and self.index[word] > OOV

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.words == other.words

    def save(self, path):
        Path(path).write_text("".join(w + "\n" for w in self.words), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def build_vocab(corpus, max_size: int = 18352) -> Vocabulary:
    """Most frequent words first, ties broken alphabetically."""
    if max_size < 3:
        raise ValueError("max_size must be at least 3")
    counts = Counter(tok for doc in corpus for tok in doc)
    if not counts:
        raise ValueError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([w for w, _ in ranked[: max_size - 2]])


@dataclass
class TokenizedDoc:
    grid: np.ndarray  # [S, T] int32
    tokens: list  # kept token strings per sentence
    label: int | None = None
    empty: bool = False  # nothing survived cleaning
    id: str | None = None


def vectorize_sentences(sentences, vocab: Vocabulary, max_sentences=15, max_tokens=200,
                        label=None, rid=None) -> TokenizedDoc:
    """Index, truncate (keep the head) and zero-pad token lists to [S, T]."""
    grid = np.zeros((max_sentences, max_tokens), dtype=np.int32)
    kept = []
    for i, toks in enumerate(sentences[:max_sentences]):
        toks = toks[:max_tokens]
        grid[i, : len(toks)] = [vocab[t] for t in toks]
        kept.append(list(toks))
    return TokenizedDoc(grid, kept, label, not kept, rid)


def vectorize(record: RawRecord, vocab: Vocabulary, prep: Preprocessor | None = None,
              max_sentences=15, max_tokens=200) -> TokenizedDoc:
    prep = prep if prep is not None else Preprocessor()
    return vectorize_sentences(prep.sentences(record.text), vocab, max_sentences, max_tokens,
                               record.label, record.id)


def stack(docs):
    """Arrays (grids [N, S, T], labels [N]) from a list of TokenizedDoc."""
    X = np.stack([d.grid for d in docs]) if docs else np.zeros((0, 0, 0), dtype=np.int32)
    y = np.array([-1 if d.label is None else d.label for d in docs], dtype=np.int64)
    return X, y
