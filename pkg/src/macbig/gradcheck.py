"""Central finite-difference checks for the hand-written backward passes.

The analytic gradient is taken in the dtype of ``params`` (float32 by
default). The finite-difference reference is evaluated on a float64 copy:
float32 forward roundoff alone produces relative errors of 1e-2 and worse on
small gradient components, which would hide real backward bugs behind noise.
Closures passed to :func:`grad_check` must therefore compute in whatever
dtype they are handed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L

REFERENCE_EPS = 1e-5
# Denominator floor of the relative error. Gradient components that are
# exactly zero in theory (a bias feeding every softmax score equally) come out
# around 1e-9 in float32, so the float32 floor sits well above that roundoff.
ERROR_FLOOR = {np.dtype(np.float32): 1e-5, np.dtype(np.float64): 1e-8}


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tol: float
    n_checked: int
    diagnostic: str = ""
    worst_index: tuple = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return not self.diagnostic and self.max_rel_error < self.tol

    def __str__(self):
        status = "ok" if self.passed else "FAIL"
        msg = (f"{self.name:<32s} max rel err {self.max_rel_error:.3e}  "
               f"(tol {self.tol:.0e}, n={self.n_checked})  {status}")
        return msg + (f"  [{self.diagnostic}]" if self.diagnostic else "")


def rel_error(ga, gn, floor=1e-8):
    return np.abs(ga - gn) / np.maximum(np.maximum(np.abs(ga), np.abs(gn)), floor)


def numeric_grad(fn, params: np.ndarray, eps: float, idx=None) -> np.ndarray:
    """Central differences of ``fn(params)[0]`` at the flat indices ``idx``."""
    flat = params.reshape(-1)
    idx = np.arange(flat.size) if idx is None else idx
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + eps
        fp = float(fn(params)[0])
        flat[i] = old - eps
        fm = float(fn(params)[0])
        flat[i] = old
        out[j] = (fp - fm) / (2 * eps)
    return out


def grad_check(fn, params: np.ndarray, tol: float = 1e-3, name: str = "op",
               eps: float = REFERENCE_EPS, reference_dtype=np.float64,
               max_entries: int | None = None, rng=None, indices=None) -> GradCheckReport:
    """Compare ``fn``'s analytic gradient with central differences.

    ``fn(p)`` returns ``(scalar, grad_wrt_p)``. With ``reference_dtype=None``
    the differences are taken in the dtype of ``params`` itself. ``indices``
    restricts the check to those flat coordinates; with ``max_entries`` a
    seeded random subset of them is checked.
    """
    value, ga = fn(params)
    ga = np.asarray(ga, dtype=np.float64).reshape(-1)
    if not np.isfinite(value) or not np.all(np.isfinite(ga)):
        return GradCheckReport(name, float("inf"), tol, 0, "non-finite analytic value or gradient")
    idx = np.arange(params.size) if indices is None else np.asarray(indices)
    if max_entries is not None and idx.size > max_entries:
        rng = rng if rng is not None else L.make_rng(0)
        idx = np.sort(rng.choice(idx, size=max_entries, replace=False))
    ref = params.astype(reference_dtype) if reference_dtype is not None else params.copy()
    gn = numeric_grad(fn, ref, eps, idx)
    if not np.all(np.isfinite(gn)):
        return GradCheckReport(name, float("inf"), tol, len(idx), "non-finite numeric gradient")
    err = rel_error(ga[idx], gn, ERROR_FLOOR.get(params.dtype, 1e-8))
    worst = int(np.argmax(err))
    return GradCheckReport(name, float(err[worst]), tol, len(idx),
                           worst_index=tuple(int(i) for i in np.unravel_index(idx[worst], params.shape)))


# ---------------------------------------------------------------- suites


def _cast(layer, dtype):
    """Copy of a layer dataclass with every array cast to ``dtype``."""
    kw = {k: (v.astype(dtype) if isinstance(v, np.ndarray) else v) for k, v in vars(layer).items()}
    return type(layer)(**kw)


def _projected(out, R):
    """Scalar objective sum(out * R), accumulated in float64."""
    return float(np.sum(out * R, dtype=np.float64))


def layer_checks(seed: int, tol: float = 1e-3, dtype=L.DTYPE):
    """Finite-difference checks of every layer's backward pass on small random shapes."""
    rng = L.make_rng(seed)
    reports = []

    x = rng.standard_normal((2, 10, 4)).astype(dtype)
    conv = L.Conv1dLayer.init(3, 4, 5, rng, dtype)
    conv.b[:] = rng.uniform(-0.1, 0.1, 5)
    R = rng.standard_normal((2, 8, 5)).astype(dtype)

    def conv_fn(which):
        def fn(p):
            layer = _cast(conv, p.dtype)
            xx = x.astype(p.dtype)
            if which == "x":
                xx = p
            else:
                setattr(layer, which, p)
            out, cache = L.conv1d_relu(xx, layer)
            dx, g = L.conv1d_relu_backward(R.astype(p.dtype), cache, layer)
            return _projected(out, R), dx if which == "x" else g[which]
        return fn

    for which, p in (("W", conv.W), ("b", conv.b), ("x", x)):
        reports.append(grad_check(conv_fn(which), p, tol, f"conv1d_relu.{which}"))

    xp = rng.standard_normal((2, 10, 3)).astype(dtype)
    Rp = rng.standard_normal((2, 3, 3)).astype(dtype)

    def pool_fn(p):
        out, cache = L.maxpool1d(p)
        return _projected(out, Rp), L.maxpool1d_backward(Rp.astype(p.dtype), cache)

    reports.append(grad_check(pool_fn, xp, tol, "maxpool1d.x"))

    parts = [rng.standard_normal((2, n, 3)).astype(dtype) for n in (3, 2, 2)]
    Rc = rng.standard_normal((2, 7, 3)).astype(dtype)

    def concat_fn(p):
        out, lengths = L.concat_time([p] + [q.astype(p.dtype) for q in parts[1:]])
        return _projected(out, Rc), L.concat_time_backward(Rc.astype(p.dtype), lengths)[0]

    reports.append(grad_check(concat_fn, parts[0], tol, "concat_time.x"))

    xg = rng.standard_normal((2, 5, 4)).astype(dtype)
    fwd, bwd = L.GruCell.init(4, 3, rng, dtype), L.GruCell.init(4, 3, rng, dtype)
    fwd.b[:] = rng.uniform(-0.1, 0.1, 9)
    Rg = rng.standard_normal((2, 5, 6)).astype(dtype)

    def gru_fn(which, direction):
        def fn(p):
            f, b = _cast(fwd, p.dtype), _cast(bwd, p.dtype)
            xx = p if which == "x" else xg.astype(p.dtype)
            if which != "x":
                setattr(f if direction == "fwd" else b, which, p)
            out, cache = L.bigru(xx, f, b)
            dx, gf, gb = L.bigru_backward(Rg.astype(p.dtype), cache, f, b)
            g = dx if which == "x" else (gf if direction == "fwd" else gb)[which]
            return _projected(out, Rg), g
        return fn

    for which in ("Wx", "U", "b"):
        for direction, cell in (("fwd", fwd), ("bwd", bwd)):
            reports.append(grad_check(gru_fn(which, direction), getattr(cell, which), tol,
                                      f"bigru.{direction}.{which}"))
    reports.append(grad_check(gru_fn("x", None), xg, tol, "bigru.x"))

    xd = rng.standard_normal((2, 4, 5)).astype(dtype)
    for act in ("relu", "linear", "softmax"):
        dl = L.DenseLayer.init(5, 3, rng, act, dtype)
        dl.b[:] = rng.uniform(-0.1, 0.1, 3)
        Rd = rng.standard_normal((2, 4, 3)).astype(dtype)

        def dense_fn(which, dl=dl, Rd=Rd):
            def fn(p):
                layer = _cast(dl, p.dtype)
                xx = p if which == "x" else xd.astype(p.dtype)
                if which != "x":
                    setattr(layer, which, p)
                out, cache = L.dense(xx, layer)
                dx, g = L.dense_backward(Rd.astype(p.dtype), cache, layer)
                return _projected(out, Rd), dx if which == "x" else g[which]
            return fn

        for which, p in (("W", dl.W), ("b", dl.b), ("x", xd)):
            reports.append(grad_check(dense_fn(which), p, tol, f"dense[{act}].{which}"))

    xa = rng.standard_normal((2, 6, 8)).astype(dtype)
    att = L.AttentionLayer.init(8, rng, dtype)
    att.b[:] = rng.uniform(-0.1, 0.1, 8)
    Ra = rng.standard_normal((2, 8)).astype(dtype)

    def att_fn(which):
        def fn(p):
            layer = _cast(att, p.dtype)
            xx = p if which == "x" else xa.astype(p.dtype)
            if which != "x":
                setattr(layer, which, p)
            ctx, _, cache = L.attention(xx, layer)
            dx, g = L.attention_backward(Ra.astype(p.dtype), cache, layer)
            return _projected(ctx, Ra), dx if which == "x" else g[which]
        return fn

    for which, p in (("W", att.W), ("b", att.b), ("ctx", att.ctx), ("x", xa)):
        reports.append(grad_check(att_fn(which), p, tol, f"attention.{which}"))

    xs = rng.standard_normal((3, 7)).astype(dtype)
    Rs = rng.standard_normal((3, 7)).astype(dtype)

    def softmax_fn(p):
        out = L.softmax(p)
        return _projected(out, Rs), L.softmax_backward(Rs.astype(p.dtype), out)

    reports.append(grad_check(softmax_fn, xs, tol, "softmax.z"))

    xo = rng.standard_normal((4, 6)).astype(dtype)
    Ro = rng.standard_normal((4, 6)).astype(dtype)
    mask_seed = int(rng.integers(1 << 31))

    def dropout_fn(p):
        out, mask = L.dropout(p, 0.5, True, L.make_rng(mask_seed))
        return _projected(out, Ro), L.dropout_backward(Ro.astype(p.dtype), mask)

    reports.append(grad_check(dropout_fn, xo, tol, "dropout.x"))
    return reports


def tiny_hyperparams():
    from .model import HyperParams

    return HyperParams(max_sentences=4, max_tokens=9, embed_dim=5, filters=4, kernel_sizes=(1, 2),
                       pool_size=2, gru_hidden=3, attn_dim=4, dropout=0.5)


def end_to_end_checks(seed: int, tol: float = 1e-3, max_entries: int | None = 40, l2: float = 1e-3,
                      dtype=L.DTYPE):
    """Check the full regularized-cost gradient of a tiny model, tensor by tensor."""
    from .model import _assign, build
    from .train import TrainConfig, backprop_batch

    hp = tiny_hyperparams()
    vocab = 20
    rng = L.make_rng(seed)
    params = build(hp, vocab, rng, dtype=dtype)
    # non-zero biases so every bias gradient path is exercised
    for name, t in params.named().items():
        if name.endswith(".b"):
            t[:] = rng.uniform(-0.1, 0.1, t.shape)
    docs = rng.integers(0, vocab, size=(3, hp.max_sentences, hp.max_tokens))
    docs[0, -1] = 0  # one all-padding sentence
    labels = np.array([0, 1, 2])
    cfg = TrainConfig(l2=l2)
    dropout_seed = int(rng.integers(1 << 31))
    names = list(params.named())
    reports = []
    for name in names:
        def fn(p, name=name):
            local = params.astype(p.dtype)
            tensors = local.named()
            tensors[name] = p
            _assign(local, tensors)
            cost, grads = backprop_batch(docs, labels, local, hp, cfg, L.make_rng(dropout_seed))
            return cost, grads[name]
        target = params.named()[name]
        # the pad row is held at zero by design, so its gradient is masked
        indices = np.arange(hp.embed_dim, target.size) if name == "embedding" else None
        reports.append(grad_check(fn, target, tol, f"model.{name}", max_entries=max_entries,
                                  rng=L.make_rng(seed + 1), indices=indices))
    return reports
