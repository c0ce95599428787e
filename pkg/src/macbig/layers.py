"""Layer primitives with hand-written forward and backward passes.

Every op works on a leading batch axis so that many sentences (or documents)
run through one matmul. Forward functions return ``(out, cache)``; the
matching ``*_backward`` takes the upstream gradient and the cache and returns
the input gradient plus a dict of parameter gradients keyed like the layer's
``tensors()``.

Arrays are plain ``numpy.ndarray``. Ops keep the dtype of their inputs, so the
same code runs in float32 (default) or float64 (tighter gradient checks).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float32
POOL = 3


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; identical values for identical seeds."""
    return np.random.Generator(np.random.PCG64(seed))


def init_uniform(shape, rng: np.random.Generator, fan_in: int, fan_out: int, dtype=DTYPE) -> np.ndarray:
    """Glorot-uniform draw, consumed from ``rng`` in row-major order."""
    shape = tuple(shape)
    if not shape:
        raise ValueError("init_uniform needs a non-empty shape")
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fan_in and fan_out must be positive")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def zeros(shape, dtype=DTYPE) -> np.ndarray:
    return np.zeros(shape, dtype=dtype)


@dataclass
class Conv1dLayer:
    W: np.ndarray  # [k, C_in, C_out]
    b: np.ndarray  # [C_out]

    @classmethod
    def init(cls, k, c_in, c_out, rng, dtype=DTYPE):
        W = init_uniform((k, c_in, c_out), rng, k * c_in, c_out, dtype)
        return cls(W, zeros(c_out, dtype))

    @property
    def kernel_size(self) -> int:
        return self.W.shape[0]

    def tensors(self):
        return {"W": self.W, "b": self.b}

    def parameter_count(self) -> int:
        return self.W.size + self.b.size


@dataclass
class GruCell:
    """GRU weights with the three gates stacked along the last axis.

    Gate order is update (z), reset (r), candidate (n): ``Wx[:, :H]`` is the
    update gate's input matrix, ``U[:, H:2H]`` the reset gate's recurrent
    matrix, and so on.
    """

    Wx: np.ndarray  # [C_in, 3H]
    U: np.ndarray  # [H, 3H]
    b: np.ndarray  # [3H]

    @classmethod
    def init(cls, c_in, hidden, rng, dtype=DTYPE):
        Wx = np.concatenate([init_uniform((c_in, hidden), rng, c_in, hidden, dtype) for _ in range(3)], axis=1)
        U = np.concatenate([init_uniform((hidden, hidden), rng, hidden, hidden, dtype) for _ in range(3)], axis=1)
        return cls(Wx, U, zeros(3 * hidden, dtype))

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    def tensors(self):
        return {"Wx": self.Wx, "U": self.U, "b": self.b}

    def parameter_count(self) -> int:
        return self.Wx.size + self.U.size + self.b.size


@dataclass
class AttentionLayer:
    W: np.ndarray  # [D, D]
    b: np.ndarray  # [D]
    ctx: np.ndarray  # [D]

    @classmethod
    def init(cls, dim, rng, dtype=DTYPE):
        W = init_uniform((dim, dim), rng, dim, dim, dtype)
        ctx = init_uniform((dim,), rng, dim, 1, dtype)
        return cls(W, zeros(dim, dtype), ctx)

    def tensors(self):
        return {"W": self.W, "b": self.b, "ctx": self.ctx}

    def parameter_count(self) -> int:
        return self.W.size + self.b.size + self.ctx.size


@dataclass
class DenseLayer:
    W: np.ndarray  # [C_in, C_out]
    b: np.ndarray  # [C_out]
    activation: str = "linear"

    @classmethod
    def init(cls, c_in, c_out, rng, activation="linear", dtype=DTYPE):
        return cls(init_uniform((c_in, c_out), rng, c_in, c_out, dtype), zeros(c_out, dtype), activation)

    def tensors(self):
        return {"W": self.W, "b": self.b}

    def parameter_count(self) -> int:
        return self.W.size + self.b.size


# ---------------------------------------------------------------- activations


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z, axis=-1):
    z = np.asarray(z)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dp, p, axis=-1):
    return p * (dp - (dp * p).sum(axis=axis, keepdims=True))


# ---------------------------------------------------------------- embedding


def embedding(idx, E):
    return E[idx], idx


def embedding_backward(dout, idx, E_shape, pad_index=0):
    dE = np.zeros(E_shape, dtype=dout.dtype)
    np.add.at(dE, idx.reshape(-1), dout.reshape(-1, E_shape[1]))
    if pad_index is not None:
        dE[pad_index] = 0
    return dE


# ---------------------------------------------------------------- convolution


def conv1d_relu(x, layer: Conv1dLayer):
    """Valid 1-D convolution over time followed by ReLU.

    x: [N, T, C_in] -> [N, T-k+1, C_out]
    """
    k, c_in, c_out = layer.W.shape
    n, t, c = x.shape
    if c != c_in:
        raise ValueError(f"conv expects {c_in} input channels, got {c}")
    if t < k:
        raise ValueError("sequence shorter than kernel")
    length = t - k + 1
    # windows: [N, L, C, k] -> [N, L, k, C]
    win = sliding_window_view(x, k, axis=1).transpose(0, 1, 3, 2)
    cols = win.reshape(n * length, k * c_in)
    pre = cols @ layer.W.reshape(k * c_in, c_out) + layer.b
    out = np.maximum(pre, 0).reshape(n, length, c_out)
    return out, (cols, out, x.shape)


def conv1d_relu_backward(dout, cache, layer: Conv1dLayer):
    cols, out, x_shape = cache
    k, c_in, c_out = layer.W.shape
    n, t, _ = x_shape
    length = t - k + 1
    dpre = (dout * (out > 0)).reshape(n * length, c_out)
    dW = (cols.T @ dpre).reshape(k, c_in, c_out)
    db = dpre.sum(axis=0)
    dcols = (dpre @ layer.W.reshape(k * c_in, c_out).T).reshape(n, length, k, c_in)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for j in range(k):
        dx[:, j : j + length] += dcols[:, :, j]
    return dx, {"W": dW, "b": db}


# ---------------------------------------------------------------- pooling


def maxpool1d(x, size=POOL):
    """Non-overlapping max over time windows; a short tail is dropped."""
    n, t, c = x.shape
    if t < size:
        raise ValueError(f"maxpool needs at least {size} timesteps, got {t}")
    length = t // size
    win = x[:, : length * size].reshape(n, length, size, c)
    out = win[:, :, 0].copy()
    arg = np.zeros(out.shape, dtype=np.int8)
    for j in range(1, size):
        better = win[:, :, j] > out  # strict: the first maximum keeps the gradient
        arg[better] = j
        np.maximum(out, win[:, :, j], out=out)
    return out, (arg, x.shape, size)


def maxpool1d_backward(dout, cache):
    arg, x_shape, size = cache
    n, t, c = x_shape
    length = arg.shape[1]
    dwin = np.zeros((n, length, size, c), dtype=dout.dtype)
    for j in range(size):
        dwin[:, :, j] = np.where(arg == j, dout, 0)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, : length * size] = dwin.reshape(n, length * size, c)
    return dx


def concat_time(parts):
    chans = {p.shape[-1] for p in parts}
    if len(chans) != 1:
        raise ValueError(f"concat_time: mismatched channel counts {sorted(chans)}")
    return np.concatenate(parts, axis=-2), [p.shape[-2] for p in parts]


def concat_time_backward(dout, lengths):
    return np.split(dout, np.cumsum(lengths)[:-1], axis=-2)


# ---------------------------------------------------------------- GRU


def gru_scan(x, cell: GruCell):
    """Left-to-right GRU over x [N, T, C] from a zero state; returns [N, T, H]."""
    n, t, c = x.shape
    if c != cell.Wx.shape[0]:
        raise ValueError(f"GRU expects {cell.Wx.shape[0]} input channels, got {c}")
    H = cell.hidden
    U_zr = np.ascontiguousarray(cell.U[:, : 2 * H])
    U_n = np.ascontiguousarray(cell.U[:, 2 * H :])
    # time-major so each step reads contiguous rows
    xw = np.ascontiguousarray(x.transpose(1, 0, 2)) @ cell.Wx + cell.b
    xw_zr = np.ascontiguousarray(xw[:, :, : 2 * H])
    xw_n = np.ascontiguousarray(xw[:, :, 2 * H :])
    h = np.zeros((n, H), dtype=x.dtype)
    hs = np.empty((t, n, H), dtype=x.dtype)
    steps = []
    for i in range(t):
        zr = sigmoid(xw_zr[i] + h @ U_zr)
        z, r = zr[:, :H], zr[:, H:]
        rh = r * h
        cand = np.tanh(xw_n[i] + rh @ U_n)
        h = (1 - z) * h + z * cand
        steps.append((hs[i - 1] if i else np.zeros_like(h), z, r, rh, cand))
        hs[i] = h
    return hs.transpose(1, 0, 2), (x, steps)


def gru_scan_backward(dhs, cache, cell: GruCell):
    x, steps = cache
    n, t, c = x.shape
    H = cell.hidden
    U_z, U_r, U_n = cell.U[:, :H], cell.U[:, H : 2 * H], cell.U[:, 2 * H :]
    dU = np.zeros_like(cell.U)
    dxw = np.empty((n, t, 3 * H), dtype=dhs.dtype)
    dh_next = np.zeros((n, H), dtype=dhs.dtype)
    for i in reversed(range(t)):
        h, z, r, rh, cand = steps[i]
        dh_out = dhs[:, i] + dh_next
        dz = dh_out * (cand - h)
        da_n = dh_out * z * (1 - cand * cand)
        dh = dh_out * (1 - z)
        drh = da_n @ U_n.T
        dh += drh * r
        da_z = dz * z * (1 - z)
        da_r = drh * h * r * (1 - r)
        dU[:, :H] += h.T @ da_z
        dU[:, H : 2 * H] += h.T @ da_r
        dU[:, 2 * H :] += rh.T @ da_n
        dh += da_z @ U_z.T + da_r @ U_r.T
        dxw[:, i, :H] = da_z
        dxw[:, i, H : 2 * H] = da_r
        dxw[:, i, 2 * H :] = da_n
        dh_next = dh
    flat = dxw.reshape(n * t, 3 * H)
    dWx = x.reshape(n * t, c).T @ flat
    db = flat.sum(axis=0)
    dx = dxw @ cell.Wx.T
    return dx, {"Wx": dWx, "U": dU, "b": db}


def bigru(x, fwd: GruCell, bwd: GruCell):
    """Forward and time-reversed scans, concatenated per step: [N, T, 2H]."""
    if fwd.hidden != bwd.hidden:
        raise ValueError("forward and backward GRU cells differ in hidden size")
    hf, cf = gru_scan(x, fwd)
    hb, cb = gru_scan(x[:, ::-1], bwd)
    return np.concatenate([hf, hb[:, ::-1]], axis=-1), (cf, cb)


def bigru_backward(dout, cache, fwd: GruCell, bwd: GruCell):
    cf, cb = cache
    H = fwd.hidden
    dxf, gf = gru_scan_backward(dout[..., :H], cf, fwd)
    dxb, gb = gru_scan_backward(np.ascontiguousarray(dout[:, ::-1, H:]), cb, bwd)
    return dxf + dxb[:, ::-1], gf, gb


# ---------------------------------------------------------------- dense


def dense(x, layer: DenseLayer):
    if x.shape[-1] != layer.W.shape[0]:
        raise ValueError(f"dense expects trailing dim {layer.W.shape[0]}, got {x.shape[-1]}")
    pre = x @ layer.W + layer.b
    if layer.activation == "relu":
        out = np.maximum(pre, 0)
    elif layer.activation == "linear":
        out = pre
    elif layer.activation == "softmax":
        out = softmax(pre)
    else:
        raise ValueError(f"unknown activation {layer.activation!r}")
    return out, (x, out)


def dense_backward(dout, cache, layer: DenseLayer):
    x, out = cache
    if layer.activation == "relu":
        dpre = dout * (out > 0)
    elif layer.activation == "softmax":
        dpre = softmax_backward(dout, out)
    else:
        dpre = dout
    c_in, c_out = layer.W.shape
    dW = x.reshape(-1, c_in).T @ dpre.reshape(-1, c_out)
    db = dpre.reshape(-1, c_out).sum(axis=0)
    return dpre @ layer.W.T, {"W": dW, "b": db}


# ---------------------------------------------------------------- attention


def attention(x, layer: AttentionLayer):
    """Additive attention pooling over time.

    x: [N, T, D] -> context [N, D], weights [N, T]. The context is the
    weighted sum of the rows of ``x`` itself.
    """
    if x.shape[1] < 1:
        raise ValueError("attention needs at least one timestep")
    if x.shape[-1] != layer.W.shape[0]:
        raise ValueError(f"attention expects dim {layer.W.shape[0]}, got {x.shape[-1]}")
    u = np.maximum(x @ layer.W + layer.b, 0)
    scores = u @ layer.ctx
    a = softmax(scores, axis=1)
    context = np.einsum("nt,ntd->nd", a, x)
    return context, a, (x, u, a)


def attention_backward(dctx, cache, layer: AttentionLayer, dweights=None):
    x, u, a = cache
    dx = a[:, :, None] * dctx[:, None, :]
    da = np.einsum("ntd,nd->nt", x, dctx)
    if dweights is not None:
        da = da + dweights
    ds = softmax_backward(da, a, axis=1)
    du = ds[:, :, None] * layer.ctx
    dcv = np.einsum("nt,ntd->d", ds, u)
    dpre = du * (u > 0)
    D = x.shape[-1]
    dW = x.reshape(-1, D).T @ dpre.reshape(-1, D)
    db = dpre.reshape(-1, D).sum(axis=0)
    dx += dpre @ layer.W.T
    return dx, {"W": dW, "b": db, "ctx": dcv}


# ---------------------------------------------------------------- dropout


def dropout(x, rate, training, rng=None):
    """Inverted dropout. Returns (out, mask); mask is None when inactive."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask
