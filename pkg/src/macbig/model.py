"""The two-level Conv-BiGRU attention classifier.

A document is a grid of token indices ``[S, T]``. Each sentence row goes
through the word-level encoder (embedding, three conv branches, pooling,
BiGRU, time-distributed dense, attention) and becomes one vector; the
resulting ``[S, D]`` sequence goes through a structurally identical
sentence-level encoder, then dropout and a softmax output layer.

Batches are run through the word encoder as one stack of sentence rows.
Identical rows (most often all-padding sentences) are encoded once and their
gradients summed, which changes nothing numerically but saves most of the
work on short documents.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import layers as L

LABELS = ("negative", "neutral", "positive")
PAD, OOV = 0, 1


@dataclass
class HyperParams:
    max_sentences: int = 15
    max_tokens: int = 200
    embed_dim: int = 100
    filters: int = 128
    kernel_sizes: tuple = (3, 4, 5)
    pool_size: int = 3
    gru_hidden: int = 100
    attn_dim: int = 100
    classes: int = 3
    dropout: float = 0.5
    td_activation: str = "relu"
    freeze_embedding: bool = False

    def __post_init__(self):
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)

    def to_dict(self):
        d = asdict(self)
        d["kernel_sizes"] = list(self.kernel_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EncoderLevel:
    convs: list
    gru_fwd: L.GruCell
    gru_bwd: L.GruCell
    td: L.DenseLayer
    att: L.AttentionLayer

    @classmethod
    def init(cls, c_in, hp: HyperParams, rng, dtype=L.DTYPE):
        convs = [L.Conv1dLayer.init(k, c_in, hp.filters, rng, dtype) for k in hp.kernel_sizes]
        fwd = L.GruCell.init(hp.filters, hp.gru_hidden, rng, dtype)
        bwd = L.GruCell.init(hp.filters, hp.gru_hidden, rng, dtype)
        td = L.DenseLayer.init(2 * hp.gru_hidden, hp.attn_dim, rng, hp.td_activation, dtype)
        att = L.AttentionLayer.init(hp.attn_dim, rng, dtype)
        return cls(convs, fwd, bwd, td, att)

    def named(self, prefix):
        out = {}
        for conv in self.convs:
            for k, v in conv.tensors().items():
                out[f"{prefix}.conv{conv.kernel_size}.{k}"] = v
        for tag, layer in (("gru_fwd", self.gru_fwd), ("gru_bwd", self.gru_bwd),
                           ("td_dense", self.td), ("attention", self.att)):
            for k, v in layer.tensors().items():
                out[f"{prefix}.{tag}.{k}"] = v
        return out


@dataclass
class MacbigParams:
    embedding: np.ndarray  # [V, d]
    word: EncoderLevel
    sentence: EncoderLevel
    output: L.DenseLayer

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def dtype(self):
        return self.embedding.dtype

    def named(self) -> dict:
        """Every parameter tensor by stable dotted name, in checkpoint order."""
        out = {"embedding": self.embedding}
        out.update(self.word.named("word"))
        out.update(self.sentence.named("sentence"))
        out.update({f"output.{k}": v for k, v in self.output.tensors().items()})
        return out

    def copy(self) -> "MacbigParams":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "MacbigParams":
        new = self.copy()
        src = new.named()
        _assign(new, {k: v.astype(dtype) for k, v in src.items()})
        return new

    def parameter_count(self) -> int:
        return sum(v.size for v in self.named().values())


def _assign(params: MacbigParams, tensors: dict):
    """Rebind every named tensor of ``params`` to the arrays in ``tensors``."""
    params.embedding = tensors["embedding"]
    for prefix, level in (("word", params.word), ("sentence", params.sentence)):
        for conv in level.convs:
            conv.W = tensors[f"{prefix}.conv{conv.kernel_size}.W"]
            conv.b = tensors[f"{prefix}.conv{conv.kernel_size}.b"]
        for tag, layer in (("gru_fwd", level.gru_fwd), ("gru_bwd", level.gru_bwd),
                           ("td_dense", level.td), ("attention", level.att)):
            for k in layer.tensors():
                setattr(layer, k, tensors[f"{prefix}.{tag}.{k}"])
    params.output.W = tensors["output.W"]
    params.output.b = tensors["output.b"]


def from_named(hp: HyperParams, tensors: dict) -> MacbigParams:
    params = build(hp, tensors["embedding"].shape[0], L.make_rng(0), dtype=tensors["embedding"].dtype)
    expected = params.named()
    for k, v in expected.items():
        if k not in tensors:
            raise KeyError(f"missing parameter {k}")
        if tensors[k].shape != v.shape:
            raise ValueError(f"parameter {k} has shape {tensors[k].shape}, expected {v.shape}")
    _assign(params, tensors)
    return params


def build(hp: HyperParams, vocab_size: int, rng, dtype=L.DTYPE) -> MacbigParams:
    if vocab_size < 2:
        raise ValueError("vocab_size must be at least 2 (pad and OOV are reserved)")
    E = L.init_uniform((vocab_size, hp.embed_dim), rng, vocab_size, hp.embed_dim, dtype)
    E[PAD] = 0
    word = EncoderLevel.init(hp.embed_dim, hp, rng, dtype)
    sentence = EncoderLevel.init(hp.attn_dim, hp, rng, dtype)
    out = L.DenseLayer.init(hp.attn_dim, hp.classes, rng, "softmax", dtype)
    return MacbigParams(E, word, sentence, out)


# ---------------------------------------------------------------- encoders


def encode(x, level: EncoderLevel, pool: int):
    """Conv-BiGRU-attention over x [N, T, C]; returns context [N, D], weights [N, T']."""
    shapes = []
    conv_caches, pool_caches, pooled = [], [], []
    for i, conv in enumerate(level.convs, 1):
        h, c = L.conv1d_relu(x, conv)
        shapes.append((f"Conv1D_{i}", h.shape[1:]))
        conv_caches.append(c)
        p, pc = L.maxpool1d(h, pool)
        pooled.append(p)
        pool_caches.append(pc)
    for i, p in enumerate(pooled, 1):
        shapes.append((f"MaxPooling1D_{i}", p.shape[1:]))
    cat, lengths = L.concat_time(pooled)
    shapes.append(("Concatenate", cat.shape[1:]))
    seq, last_pool = L.maxpool1d(cat, pool)
    shapes.append((f"MaxPooling1D_{len(pooled) + 1}", seq.shape[1:]))
    hs, gru_cache = L.bigru(seq, level.gru_fwd, level.gru_bwd)
    shapes.append(("Bidirectional_GRU", hs.shape[1:]))
    v, td_cache = L.dense(hs, level.td)
    shapes.append(("TimeDistributed (Dense)", v.shape[1:]))
    ctx, weights, att_cache = L.attention(v, level.att)
    shapes.append(("Hierarchical_attention_Network", ctx.shape[1:]))
    cache = (conv_caches, pool_caches, lengths, last_pool, gru_cache, td_cache, att_cache)
    return ctx, weights, cache, shapes


def encode_backward(dctx, cache, level: EncoderLevel):
    conv_caches, pool_caches, lengths, last_pool, gru_cache, td_cache, att_cache = cache
    grads = {}
    dv, g = L.attention_backward(dctx, att_cache, level.att)
    grads["attention"] = g
    dhs, g = L.dense_backward(dv, td_cache, level.td)
    grads["td_dense"] = g
    dseq, gf, gb = L.bigru_backward(dhs, gru_cache, level.gru_fwd, level.gru_bwd)
    grads["gru_fwd"], grads["gru_bwd"] = gf, gb
    dcat = L.maxpool1d_backward(dseq, last_pool)
    dx = None
    for conv, cc, pc, dp in zip(level.convs, conv_caches, pool_caches, L.concat_time_backward(dcat, lengths)):
        dh = L.maxpool1d_backward(dp, pc)
        dxi, g = L.conv1d_relu_backward(dh, cc, conv)
        grads[f"conv{conv.kernel_size}"] = g
        dx = dxi if dx is None else dx + dxi
    return dx, grads


def _flatten_level_grads(prefix, grads):
    return {f"{prefix}.{layer}.{k}": v for layer, g in grads.items() for k, v in g.items()}


# ---------------------------------------------------------------- full model


@dataclass
class ForwardResult:
    probs: np.ndarray  # [B, classes]
    word_weights: np.ndarray  # [B, S, T']
    sentence_weights: np.ndarray  # [B, S']
    shapes: list = field(default_factory=list)
    cache: tuple | None = None


def unique_rows(a):
    """Distinct rows in order of first appearance, and each row's position among them."""
    seen = {}
    inv = np.empty(len(a), dtype=np.int64)
    for i, row in enumerate(a):
        inv[i] = seen.setdefault(row.tobytes(), len(seen))
    first = np.empty(len(seen), dtype=np.int64)
    first[inv[::-1]] = np.arange(len(a))[::-1]
    return a[first], inv


def forward_batch(docs, params: MacbigParams, hp: HyperParams, training=False, rng=None,
                  keep_cache=False) -> ForwardResult:
    docs = np.asarray(docs)
    if docs.ndim != 3 or docs.shape[1:] != (hp.max_sentences, hp.max_tokens):
        raise ValueError(f"documents must be shaped [B, {hp.max_sentences}, {hp.max_tokens}], got {docs.shape}")
    if docs.size and (docs.min() < 0 or docs.max() >= params.vocab_size):
        raise ValueError(f"token index out of range for vocabulary of size {params.vocab_size}")
    B, S, T = docs.shape
    rows, inv = unique_rows(docs.reshape(B * S, T))
    emb = params.embedding[rows]
    c_u, w_u, word_cache, word_shapes = encode(emb, params.word, hp.pool_size)
    sent_in = c_u[inv].reshape(B, S, -1)
    d, s_w, sent_cache, sent_shapes = encode(sent_in, params.sentence, hp.pool_size)
    d_drop, mask = L.dropout(d, hp.dropout, training, rng)
    probs, _ = L.dense(d_drop, params.output)
    shapes = ([("Input Layer", (T,)), ("Embedding", emb.shape[1:])] + word_shapes
              + [("Input Layer", (S, T)), ("TimeDistributed (Model)", sent_in.shape[1:])] + sent_shapes
              + [("Dropout", d_drop.shape[1:]), ("Dense", probs.shape[1:])])
    cache = (rows, inv, word_cache, sent_cache, d_drop, mask) if keep_cache else None
    return ForwardResult(probs, w_u[inv].reshape(B, S, -1), s_w, shapes, cache)


def backward_batch(dlogits, res: ForwardResult, params: MacbigParams, hp: HyperParams) -> dict:
    """Gradients of a loss with respect to every parameter, given d loss / d logits."""
    rows, inv, word_cache, sent_cache, d_drop, mask = res.cache
    grads = {"output.W": d_drop.T @ dlogits, "output.b": dlogits.sum(axis=0)}
    dd = L.dropout_backward(dlogits @ params.output.W.T, mask)
    dsent, g = encode_backward(dd, sent_cache, params.sentence)
    grads.update(_flatten_level_grads("sentence", g))
    B, S, D = dsent.shape
    dc_u = np.zeros((rows.shape[0], D), dtype=dsent.dtype)
    np.add.at(dc_u, inv, dsent.reshape(B * S, D))
    demb, g = encode_backward(dc_u, word_cache, params.word)
    grads.update(_flatten_level_grads("word", g))
    if hp.freeze_embedding:
        grads["embedding"] = np.zeros_like(params.embedding)
    else:
        grads["embedding"] = L.embedding_backward(demb, rows, params.embedding.shape, PAD)
    return {k: grads[k] for k in params.named()}


def _doc_grid(doc, hp):
    doc = np.asarray(doc)
    if doc.shape != (hp.max_sentences, hp.max_tokens):
        raise ValueError(f"document must be shaped [{hp.max_sentences}, {hp.max_tokens}], got {doc.shape}")
    return doc[None]


def encode_sentence(tokens, params: MacbigParams, hp: HyperParams):
    """Sentence vector [D] and word attention weights [T'] for one token row."""
    tokens = np.asarray(tokens)
    if tokens.shape != (hp.max_tokens,):
        raise ValueError(f"sentence must have {hp.max_tokens} tokens, got shape {tokens.shape}")
    if tokens.min() < 0 or tokens.max() >= params.vocab_size:
        raise ValueError(f"token index out of range for vocabulary of size {params.vocab_size}")
    c, w, _, _ = encode(params.embedding[tokens][None], params.word, hp.pool_size)
    return c[0], w[0]


def forward(doc, params: MacbigParams, hp: HyperParams, training=False, rng=None, tokens=None):
    """Class probabilities and an :class:`AttentionTrace` for one document."""
    res = forward_batch(_doc_grid(doc, hp), params, hp, training, rng)
    trace = AttentionTrace.from_result(res, 0, tokens)
    return res.probs[0], trace


def predict_from_probs(probs) -> np.ndarray:
    # argmax already returns the first (lowest) index on ties
    return np.argmax(np.asarray(probs), axis=-1)


def predict(doc, params: MacbigParams, hp: HyperParams) -> int:
    probs, _ = forward(doc, params, hp)
    return int(predict_from_probs(probs))


def predict_proba(docs, params: MacbigParams, hp: HyperParams, chunk=64) -> np.ndarray:
    docs = np.asarray(docs)
    out = [forward_batch(docs[i : i + chunk], params, hp).probs for i in range(0, len(docs), chunk)]
    return np.concatenate(out) if out else np.zeros((0, hp.classes), dtype=params.dtype)


# ---------------------------------------------------------------- traces


def receptive_fields(hp: HyperParams) -> list:
    """Token positions feeding each word-attention timestep, before the BiGRU."""
    P = hp.pool_size
    concat = []
    for k in hp.kernel_sizes:
        n_pool = (hp.max_tokens - k + 1) // P
        concat += [range(j * P, j * P + P - 1 + k) for j in range(n_pool)]
    n_final = len(concat) // P
    return [sorted(set().union(*concat[p * P : (p + 1) * P])) for p in range(n_final)]


def token_weights(position_weights, hp: HyperParams) -> np.ndarray:
    """Spread each attention position's weight evenly over its receptive field."""
    out = np.zeros(hp.max_tokens)
    for w, field_ in zip(position_weights, receptive_fields(hp)):
        out[field_] += w / len(field_)
    return out


@dataclass
class AttentionTrace:
    tokens: list  # per sentence, list of token strings
    word_weights: list  # per sentence, array [T'] over encoded positions
    sentence_weights: np.ndarray  # [S']
    probs: np.ndarray
    predicted: int

    @classmethod
    def from_result(cls, res: ForwardResult, i: int, tokens=None):
        S = res.word_weights.shape[1]
        tokens = list(tokens) if tokens is not None else [[] for _ in range(S)]
        tokens += [[] for _ in range(S - len(tokens))]
        return cls(tokens[:S], list(res.word_weights[i]), res.sentence_weights[i], res.probs[i],
                   int(predict_from_probs(res.probs[i])))

    @property
    def label(self) -> str:
        return LABELS[self.predicted]

    def to_dict(self, hp: HyperParams, text: str = "") -> dict:
        sentences = []
        for toks, w in zip(self.tokens, self.word_weights):
            if not toks:
                continue
            tw = token_weights(w, hp)[: len(toks)]
            sentences.append({"tokens": list(toks), "word_weights": [float(x) for x in w],
                              "token_weights": [float(x) for x in tw]})
        return {"text": text, "sentences": sentences,
                "sentence_weights": [float(x) for x in self.sentence_weights],
                "probabilities": {name: float(p) for name, p in zip(LABELS, self.probs)},
                "predicted": self.label}


# ---------------------------------------------------------------- accounting

# Layer tables of the reference architecture: (level, name, output shape, params).
REFERENCE_WORD_TABLE = [
    ("Input Layer", (200,), 0),
    ("Embedding", (200, 100), 1835200),
    ("Conv1D_1", (198, 128), 38528),
    ("Conv1D_2", (197, 128), 51328),
    ("Conv1D_3", (196, 128), 64128),
    ("MaxPooling1D_1", (66, 128), 0),
    ("MaxPooling1D_2", (65, 128), 0),
    ("MaxPooling1D_3", (65, 128), 0),
    ("Concatenate", (196, 128), 0),
    ("MaxPooling1D_4", (65, 128), 0),
    ("Bidirectional_GRU", (65, 200), 183200),
    ("TimeDistributed (Dense)", (65, 100), 20100),
    ("Hierarchical_attention_Network", (100,), 10200),
]
REFERENCE_SENTENCE_TABLE = [
    ("Input Layer", (15, 200), 0),
    ("TimeDistributed (Model)", (15, 100), 2202684),
    ("Conv1D_1", (13, 128), 38528),
    ("Conv1D_2", (12, 128), 51328),
    ("Conv1D_3", (11, 128), 64128),
    ("MaxPooling1D_1", (4, 128), 0),
    ("MaxPooling1D_2", (4, 128), 0),
    ("MaxPooling1D_3", (3, 128), 0),
    ("Concatenate", (11, 128), 0),
    ("MaxPooling1D_4", (3, 128), 0),
    ("Bidirectional_GRU", (3, 200), 183200),
    ("TimeDistributed (Dense)", (3, 100), 20100),
    ("Hierarchical_attention_Network", (100,), 10200),
    ("Dropout", (100,), 0),
    ("Dense", (3,), 303),
]
BIGRU_NOTE = ("Bidirectional_GRU: 2 x 3 x (C_in*H + H*H + H) with the update/reset/candidate GRU used here; "
              "the reference table's 183,200 equals a bidirectional LSTM count 2 x 4 x (...).")


def _level_counts(level: EncoderLevel):
    rows = [(f"Conv1D_{i}", c.parameter_count()) for i, c in enumerate(level.convs, 1)]
    rows += [(f"MaxPooling1D_{i}", 0) for i in range(1, len(level.convs) + 2)]
    rows += [("Concatenate", 0),
             ("Bidirectional_GRU", level.gru_fwd.parameter_count() + level.gru_bwd.parameter_count()),
             ("TimeDistributed (Dense)", level.td.parameter_count()),
             ("Hierarchical_attention_Network", level.att.parameter_count())]
    return dict(rows)


@dataclass
class ReportRow:
    level: str
    name: str
    shape: tuple
    count: int
    reference_count: int | None = None
    reference_shape: tuple | None = None

    @property
    def matches(self) -> bool | None:
        if self.reference_count is None:
            return None
        return self.count == self.reference_count and self.shape == self.reference_shape


def parameter_report(params: MacbigParams, hp: HyperParams) -> list:
    """Per-layer output shape and parameter count next to the reference tables.

    Shapes come from running one all-padding document through the network.
    """
    doc = np.zeros((1, hp.max_sentences, hp.max_tokens), dtype=np.int64)
    shapes = forward_batch(doc, params, hp).shapes
    n_word = len(REFERENCE_WORD_TABLE)
    word_shapes, sent_shapes = shapes[:n_word], shapes[n_word:]
    wc, sc = _level_counts(params.word), _level_counts(params.sentence)
    wc.update({"Input Layer": 0, "Embedding": params.embedding.size})
    word_total = sum(wc.values())
    sc.update({"Input Layer": 0, "TimeDistributed (Model)": word_total, "Dropout": 0,
               "Dense": params.output.parameter_count()})
    ref_w = {name: (shape, n) for name, shape, n in REFERENCE_WORD_TABLE}
    ref_s = {name: (shape, n) for name, shape, n in REFERENCE_SENTENCE_TABLE}
    rows = []
    for level, shp, counts, ref in (("word", word_shapes, wc, ref_w), ("sentence", sent_shapes, sc, ref_s)):
        for name, shape in shp:
            rs, rn = ref.get(name, (None, None))
            rows.append(ReportRow(level, name, tuple(shape), counts[name], rn, rs))
    return rows


def format_report(rows) -> str:
    lines = [f"{'level':<9}{'layer':<32}{'output shape':<16}{'params':>12}{'reference':>12}  match"]
    for r in rows:
        ref = "" if r.reference_count is None else f"{r.reference_count:,}"
        mark = {True: "✓", False: "✗", None: ""}[r.matches]
        if r.name in ("Bidirectional_GRU", "TimeDistributed (Model)") and not r.matches:
            mark += " *"
        lines.append(f"{r.level:<9}{r.name:<32}{str(r.shape):<16}{r.count:>12,}{ref:>12}  {mark}")
    lines.append("")
    lines.append("* " + BIGRU_NOTE)
    return "\n".join(lines)
