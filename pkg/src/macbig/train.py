"""Loss, L2-regularized cost, Adam, the training loop and the evaluation protocol."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import layers as L
from . import metrics
from .model import HyperParams, MacbigParams, backward_batch, build, forward_batch, predict_proba

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-7


class NumericalError(RuntimeError):
    """A loss or gradient became NaN/Inf."""


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2: float = 1e-3
    batch_size: int = 64
    epochs: int = 100
    folds: int = 10
    train_frac: float = 0.80
    val_frac: float = 0.05
    test_frac: float = 0.15
    seed: int = 0
    # parameter-name suffixes that receive the L2 penalty
    l2_suffixes: tuple = ("W", "Wx", "U")
    l2_embedding: bool = False

    def __post_init__(self):
        self.l2_suffixes = tuple(self.l2_suffixes)
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total}, not 1")
        for name in ("lr", "beta1", "beta2", "eps", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.l2 < 0 or self.epochs < 0 or self.folds < 1:
            raise ValueError("l2 and epochs must be non-negative and folds at least 1")

    @property
    def fractions(self):
        return (self.train_frac, self.val_frac, self.test_frac)

    def to_dict(self):
        d = asdict(self)
        d["l2_suffixes"] = list(self.l2_suffixes)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------- loss


def cross_entropy(probs, target) -> float:
    return float(-np.log(np.clip(probs[target], PROB_FLOOR, 1.0)))


def cross_entropy_batch(probs, targets) -> np.ndarray:
    """Per-sample losses, computed in float64."""
    p = np.asarray(probs, dtype=np.float64)[np.arange(len(targets)), targets]
    return -np.log(np.clip(p, PROB_FLOOR, 1.0))


def is_regularized(name: str, cfg: TrainConfig) -> bool:
    if name == "embedding":
        return cfg.l2_embedding
    return name.rsplit(".", 1)[-1] in cfg.l2_suffixes


def l2_sum(params: MacbigParams, cfg: TrainConfig) -> float:
    return float(sum(np.sum(np.square(w, dtype=np.float64)) for k, w in params.named().items()
                     if is_regularized(k, cfg)))


def regularized_cost(loss: float, params: MacbigParams, cfg: TrainConfig, m: int) -> float:
    """loss + (λ / 2m) Σ‖w‖² over the regularized weight matrices."""
    if m < 1:
        raise ValueError("batch size m must be at least 1")
    return loss + cfg.l2 / (2 * m) * l2_sum(params, cfg)


def backprop_batch(docs, labels, params: MacbigParams, hp: HyperParams, cfg: TrainConfig,
                   rng=None, training=True):
    """Mean regularized cost over the batch and its gradient for every parameter."""
    docs = np.asarray(docs)
    labels = np.asarray(labels)
    m = len(labels)
    if m == 0:
        raise ValueError("empty batch")
    res = forward_batch(docs, params, hp, training=training, rng=rng, keep_cache=True)
    losses = cross_entropy_batch(res.probs, labels)
    bad = np.nonzero(~np.isfinite(losses))[0]
    if bad.size:
        raise NumericalError(f"non-finite loss for sample {int(bad[0])} of the batch")
    p_t = res.probs[np.arange(m), labels]
    dlogits = res.probs.copy()
    dlogits[np.arange(m), labels] -= 1
    dlogits[p_t < PROB_FLOOR] = 0  # clipped: loss is flat there
    dlogits /= m
    grads = backward_batch(dlogits.astype(params.dtype), res, params, hp)
    if cfg.l2:
        scale = params.dtype.type(cfg.l2 / m)
        for k, w in params.named().items():
            if is_regularized(k, cfg):
                grads[k] = grads[k] + scale * w
    if hp.freeze_embedding:
        grads["embedding"][:] = 0
    grads["embedding"][0] = 0
    cost = regularized_cost(float(losses.mean()), params, cfg, m)
    if not np.isfinite(cost):
        raise NumericalError("non-finite regularized cost")
    return cost, grads


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: MacbigParams, grads: dict, state: AdamState, cfg: TrainConfig) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for k, w in params.named().items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(w)
            state.v[k] = np.zeros_like(w)
        m, v = state.m[k], state.v[k]
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * (g * g)
        w -= (cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)).astype(w.dtype)
    return state


# ---------------------------------------------------------------- training


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def history_to_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_FIELDS)
    for r in history:
        w.writerow([r.epoch] + [repr(float(getattr(r, f))) for f in HISTORY_FIELDS[1:]])
    return buf.getvalue()


def history_from_csv(text: str):
    rows = csv.DictReader(io.StringIO(text))
    return [EpochRecord(int(r["epoch"]), *(float(r[f]) for f in HISTORY_FIELDS[1:])) for r in rows]


def evaluate_loss_acc(docs, labels, params, hp):
    probs = predict_proba(docs, params, hp)
    labels = np.asarray(labels)
    loss = float(cross_entropy_batch(probs, labels).mean())
    acc = float(np.mean(np.argmax(probs, axis=1) == labels))
    return loss, acc, probs


@dataclass
class TrainResult:
    params: MacbigParams  # snapshot at the best validation epoch
    history: list
    best_epoch: int
    best_val_acc: float
    initial_train_loss: float
    final_params: MacbigParams | None = None


def train(train_set, val_set, hp: HyperParams, cfg: TrainConfig, params: MacbigParams,
          rng=None, on_epoch=None) -> TrainResult:
    """Minibatch Adam with the best-validation-accuracy snapshot kept.

    ``train_set`` and ``val_set`` are ``(docs, labels)`` pairs. ``params`` is
    updated in place; the returned snapshot is a separate copy.
    """
    X, y = (np.asarray(a) for a in train_set)
    Xv, yv = (X, y) if val_set is train_set else (np.asarray(a) for a in val_set)
    if len(y) == 0 or len(yv) == 0:
        raise ValueError("training and validation sets must be non-empty")
    rng = rng if rng is not None else L.make_rng(cfg.seed)
    state = AdamState()
    init_loss, _, _ = evaluate_loss_acc(X, y, params, hp)
    best = params.copy()
    best_epoch, best_acc = 0, -1.0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = backprop_batch(X[idx], y[idx], params, hp, cfg, rng)
            adam_step(params, grads, state, cfg)
        tl, ta, _ = evaluate_loss_acc(X, y, params, hp)
        same = Xv is X and yv is y
        vl, va, _ = (tl, ta, None) if same else evaluate_loss_acc(Xv, yv, params, hp)
        if not (np.isfinite(tl) and np.isfinite(vl)):
            raise NumericalError(f"non-finite loss after epoch {epoch}")
        rec = EpochRecord(epoch, tl, ta, vl, va)
        history.append(rec)
        if va > best_acc:
            best, best_epoch, best_acc = params.copy(), epoch, va
        log.debug("epoch %d train loss %.4f acc %.3f val loss %.4f acc %.3f", epoch, tl, ta, vl, va)
        if on_epoch is not None:
            on_epoch(rec)
    if not history:
        best_acc = float("nan")
    return TrainResult(best, history, best_epoch, best_acc, init_loss, params)


# ---------------------------------------------------------------- protocol


def split_stratified(labels, fractions, seed: int):
    """Per-class seeded shuffle and largest-remainder allocation.

    Returns one sorted index array per fraction. Every class must land at
    least one sample in every split.
    """
    labels = np.asarray(labels)
    fractions = np.asarray(fractions, dtype=np.float64)
    rng = L.make_rng(seed)
    parts = [[] for _ in fractions]
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(idx.size)]
        exact = np.round(idx.size * fractions, 9)
        counts = np.floor(exact).astype(int)
        rem = exact - counts
        for j in np.argsort(-rem, kind="stable")[: idx.size - counts.sum()]:
            counts[j] += 1
        if idx.size < np.count_nonzero(fractions):
            raise ValueError(f"class {int(c)} has {idx.size} samples, too few for a non-empty "
                             f"share in every split {fractions.tolist()}")
        # small classes: an empty split borrows one sample from the split rounded up the most,
        # which keeps every share within one sample of its exact target
        for j in np.nonzero((counts == 0) & (fractions > 0))[0]:
            donor = int(np.argmax(np.where(counts > 1, counts - exact, -np.inf)))
            counts[donor] -= 1
            counts[j] += 1
        bounds = np.r_[0, np.cumsum(counts)]
        for j in range(len(fractions)):
            parts[j].append(idx[bounds[j] : bounds[j + 1]])
    return tuple(np.sort(np.concatenate(p)) for p in parts)


@dataclass
class FoldResult:
    fold: int
    seed: int
    best_val_acc: float
    best_epoch: int
    test_report: metrics.EvalReport
    history: list
    params: MacbigParams
    split: tuple
    test_probs: np.ndarray | None = None


@dataclass
class CVResult:
    mean: dict
    folds: list


def cross_validate(docs, labels, hp: HyperParams, cfg: TrainConfig, vocab_size: int,
                   init_embedding=None, on_fold=None, on_epoch=None) -> CVResult:
    """Repeated stratified re-splits, one fresh model per split.

    Fold ``i`` splits and initializes with seed ``cfg.seed + i``. Test
    metrics are averaged arithmetically over folds.
    """
    docs = np.asarray(docs)
    labels = np.asarray(labels)
    folds = []
    for i in range(cfg.folds):
        seed = cfg.seed + i
        tr, va, te = split_stratified(labels, cfg.fractions, seed)
        rng = L.make_rng(seed)
        params = build(hp, vocab_size, rng)
        if init_embedding is not None:
            params.embedding[...] = init_embedding
            params.embedding[0] = 0
        res = train((docs[tr], labels[tr]), (docs[va], labels[va]), hp, cfg, params, rng,
                    on_epoch=None if on_epoch is None else (lambda r, i=i: on_epoch(i, r)))
        probs = predict_proba(docs[te], res.params, hp)
        report = metrics.evaluate(probs, labels[te])
        fold = FoldResult(i, seed, res.best_val_acc, res.best_epoch, report, res.history, res.params,
                          (tr, va, te), probs)
        folds.append(fold)
        if on_fold is not None:
            on_fold(fold)
    return CVResult(metrics.average_headlines([f.test_report for f in folds]), folds)
