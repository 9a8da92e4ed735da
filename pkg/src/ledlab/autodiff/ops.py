"""Differentiable operations.

Each function takes :class:`Tensor` (or array-like) inputs and returns a new
tensor whose backward closure yields one gradient per parent.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, make_node


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# elementwise and structural ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values + b.values
    return make_node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.values, b.values
    return make_node(av * bv, (a, b),
                     lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    return make_node(x.values * c, (x,), lambda g: (g * c,))


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return make_node(np.array(x.values.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    return scale(sum_all(x), 1.0 / x.size)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return make_node(x.values.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_node(x.values.transpose(axes).copy(), (x,), lambda g: (g.transpose(inv),))


def index(x, key) -> Tensor:
    """Basic (non-fancy) indexing, e.g. ``index(x, (slice(0, 3), 2))``."""
    x = as_tensor(x)
    shape = x.shape

    def bw(g):
        full = np.zeros(shape)
        full[key] = g
        return (full,)

    return make_node(np.array(x.values[key]), (x,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.values for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def bw(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return make_node(out, tensors, bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.values > 0
    return make_node(x.values * mask, (x,), lambda g: (g * mask,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.values)
    return make_node(y, (x,), lambda g: (g * (1.0 - y * y),))


def dropout(x, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return make_node(x.values * mask, (x,), lambda g: (g * mask,))


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis of ``x``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"linear: input features {x.shape[-1]} != weight columns {weight.shape[1]}")
    out = x.values @ weight.values.T
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.values
        parents.append(bias)
    xv, wv = x.values, weight.values

    def bw(g):
        g2 = g.reshape(-1, wv.shape[0])
        grads = [g @ wv, g2.T @ xv.reshape(-1, wv.shape[1])]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return make_node(out, parents, bw)


def embedding_lookup(table, ids) -> Tensor:
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    shape = table.shape

    def bw(g):
        full = np.zeros(shape)
        np.add.at(full, ids, g)
        return (full,)

    return make_node(table.values[ids], (table,), bw)


def log_softmax_flat(x) -> Tensor:
    """Log-softmax over every element of ``x`` taken as one distribution."""
    x = as_tensor(x)
    v = x.values
    shifted = v - v.max()
    out = shifted - np.log(np.exp(shifted).sum())
    probs = np.exp(out)
    return make_node(out, (x,), lambda g: (g - probs * g.sum(),))


def softmax_flat(x) -> Tensor:
    x = as_tensor(x)
    v = x.values
    e = np.exp(v - v.max())
    s = e / e.sum()
    return make_node(s, (x,), lambda g: (s * (g - (g * s).sum()),))


def kl_div(target, log_pred) -> Tensor:
    """``sum_i t_i (log t_i - log_pred_i)`` with ``0 log 0 = 0``.

    ``target`` is treated as a constant.
    """
    t = target.values if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    log_pred = as_tensor(log_pred)
    if t.shape != log_pred.shape:
        raise ValueError(f"kl_div: target shape {t.shape} != prediction shape {log_pred.shape}")
    if np.any(t < 0) or abs(t.sum() - 1.0) > 1e-6:
        raise ValueError("kl_div: target must be non-negative and sum to 1")
    pos = t > 0
    value = float(np.sum(t[pos] * (np.log(t[pos]) - log_pred.values[pos])))
    if np.any(np.isneginf(log_pred.values[pos])):
        value = np.inf
    return make_node(np.array(value), (log_pred,), lambda g: (-g * t,))


# convolutions ----------------------------------------------------------------

def _windows(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    # [B, C, Ho, Wo, kh, kw]
    return sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    win = _windows(x, w.shape[2], w.shape[3], stride, pad)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # [B, Ho, Wo, Cout]
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_weight_grad(x: np.ndarray, g: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    win = _windows(x, kh, kw, stride, pad)[:, :, : g.shape[2], : g.shape[3]]
    return np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # [Cout, Cin, kh, kw]


def _conv_transpose(g: np.ndarray, w: np.ndarray, stride: int, pad: int, out_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`_conv_forward` with respect to its input."""
    B, _, Ho, Wo = g.shape
    _, cin, kh, kw = w.shape
    H, W = out_hw
    # make sure every tap lands inside the padded canvas
    Hp = max(H + 2 * pad, (Ho - 1) * stride + kh)
    Wp = max(W + 2 * pad, (Wo - 1) * stride + kw)
    canvas = np.zeros((B, cin, Hp, Wp))
    cols = np.tensordot(g, w, axes=([1], [0]))  # [B, Ho, Wo, Cin, kh, kw]
    cols = cols.transpose(0, 3, 4, 5, 1, 2)  # [B, Cin, kh, kw, Ho, Wo]
    hs, ws = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            canvas[:, :, i:i + hs:stride, j:j + ws:stride] += cols[:, :, i, j]
    return canvas[:, :, pad:pad + H, pad:pad + W]


def _check_conv(x: Tensor, w: Tensor, b: Tensor | None, cin_axis: int, stride: int, pad: int) -> None:
    if x.values.ndim != 4 or w.values.ndim != 4:
        raise ValueError("convolution expects 4-d input [B,C,H,W] and 4-d weights")
    if x.shape[1] != w.shape[cin_axis]:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, weights expect {w.shape[cin_axis]}")
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    if b is not None and b.shape != (w.shape[1 - cin_axis],):
        raise ValueError(f"bias shape {b.shape} does not match output channels")


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation. ``x``: [B,Cin,H,W]; ``w``: [Cout,Cin,kh,kw]."""
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    _check_conv(x, w, b, 1, stride, pad)
    kh, kw = w.shape[2:]
    if kh > x.shape[2] + 2 * pad or kw > x.shape[3] + 2 * pad:
        raise ValueError("kernel larger than padded input")
    out = _conv_forward(x.values, w.values, stride, pad)
    if b is not None:
        out += b.values[None, :, None, None]
    xv, wv = x.values, w.values

    def bw(g):
        grads = [_conv_transpose(g, wv, stride, pad, xv.shape[2:]),
                 _conv_weight_grad(xv, g, kh, kw, stride, pad)]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_node(out, (x, w) if b is None else (x, w, b), bw)


def deconv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """Transposed convolution. ``x``: [B,Cin,H,W]; ``w``: [Cin,Cout,kh,kw].

    Output side is ``(H - 1) * stride - 2 * pad + kh``. With shared weights this
    is exactly the adjoint of ``conv2d(., w, stride=stride, pad=pad)`` mapping
    Cout channels back to Cin.
    """
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    _check_conv(x, w, b, 0, stride, pad)
    kh, kw = w.shape[2:]
    H, W = x.shape[2:]
    Ho = (H - 1) * stride - 2 * pad + kh
    Wo = (W - 1) * stride - 2 * pad + kw
    if Ho < 1 or Wo < 1:
        raise ValueError("deconv2d output would be empty")
    out = _conv_transpose(x.values, w.values, stride, pad, (Ho, Wo))
    if b is not None:
        out = out + b.values[None, :, None, None]
    xv, wv = x.values, w.values

    def bw(g):
        gx = _conv_forward(g, wv, stride, pad)[:, :, :H, :W]
        # weight gradient of <x, conv_w(g)> treats g as the conv input
        gw = np.tensordot(xv, _windows(g, kh, kw, stride, pad)[:, :, :H, :W], axes=([0, 2, 3], [0, 2, 3]))
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_node(out, (x, w) if b is None else (x, w, b), bw)


def dynamic_conv1x1(x, k) -> Tensor:
    """Per-example 1x1 convolution whose kernel ``k`` [B,Cout,C] is itself an activation."""
    x, k = as_tensor(x), as_tensor(k)
    if x.values.ndim != 4 or k.values.ndim != 3:
        raise ValueError("dynamic_conv1x1 expects x [B,C,H,W] and k [B,Cout,C]")
    B, C, H, W = x.shape
    if k.shape[0] != B or k.shape[2] != C:
        raise ValueError(f"kernel shape {k.shape} incompatible with input {x.shape}")
    xr = x.values.reshape(B, C, H * W)
    kv = k.values
    out = (kv @ xr).reshape(B, k.shape[1], H, W)

    def bw(g):
        gr = g.reshape(B, -1, H * W)
        return ((kv.transpose(0, 2, 1) @ gr).reshape(B, C, H, W), gr @ xr.transpose(0, 2, 1))

    return make_node(out, (x, k), bw)


# recurrent ---------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_scan(x, w_ih, w_hh, b, reverse: bool = False) -> Tensor:
    """Single-direction LSTM over ``x`` [T,E]; returns hidden states [T,H].

    Gate order in the stacked weights is input, forget, cell, output. With
    ``reverse`` the sequence is read from the end and the returned states are
    in the original time order.
    """
    x, w_ih, w_hh, b = (as_tensor(t) for t in (x, w_ih, w_hh, b))
    T = x.shape[0]
    if T == 0:
        raise ValueError("lstm_scan needs a non-empty sequence")
    Hd = w_hh.shape[1]
    if w_ih.shape != (4 * Hd, x.shape[1]) or w_hh.shape != (4 * Hd, Hd) or b.shape != (4 * Hd,):
        raise ValueError("inconsistent LSTM weight shapes")
    order = np.arange(T)[::-1] if reverse else np.arange(T)
    xs = x.values[order]
    zx = xs @ w_ih.values.T + b.values
    Whh = w_hh.values
    hs = np.zeros((T + 1, Hd))
    cs = np.zeros((T + 1, Hd))
    gates = np.zeros((T, 4 * Hd))
    for t in range(T):
        z = zx[t] + Whh @ hs[t]
        i, f, gg, o = _sigmoid(z[:Hd]), _sigmoid(z[Hd:2 * Hd]), np.tanh(z[2 * Hd:3 * Hd]), _sigmoid(z[3 * Hd:])
        cs[t + 1] = f * cs[t] + i * gg
        hs[t + 1] = o * np.tanh(cs[t + 1])
        gates[t] = np.concatenate([i, f, gg, o])
    out = np.empty((T, Hd))
    out[order] = hs[1:]

    def bw(g):
        gh_seq = g[order]
        dz = np.zeros((T, 4 * Hd))
        dh_next = np.zeros(Hd)
        dc_next = np.zeros(Hd)
        for t in range(T - 1, -1, -1):
            i, f, gg, o = (gates[t, k * Hd:(k + 1) * Hd] for k in range(4))
            tc = np.tanh(cs[t + 1])
            dh = gh_seq[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz[t] = np.concatenate([dc * gg * i * (1 - i), dc * cs[t] * f * (1 - f),
                                    dc * i * (1 - gg * gg), dh * tc * o * (1 - o)])
            dh_next = Whh.T @ dz[t]
            dc_next = dc * f
        dx = np.empty_like(x.values)
        dx[order] = dz @ w_ih.values
        return dx, dz.T @ xs, dz.T @ hs[:-1], dz.sum(axis=0)

    return make_node(out, (x, w_ih, w_hh, b), bw)


def bilstm_encode(embeddings, forward_weights, backward_weights):
    """Single-layer bidirectional LSTM.

    ``*_weights`` are ``(w_ih, w_hh, b)`` triples. Returns ``(states, summary)``
    where ``states`` is [T, 2H] and ``summary`` concatenates the final hidden
    state of each direction.
    """
    embeddings = as_tensor(embeddings)
    if embeddings.values.ndim != 2 or embeddings.shape[0] == 0:
        raise ValueError("bilstm_encode expects a non-empty [T, E] sequence")
    hf = lstm_scan(embeddings, *forward_weights)
    hb = lstm_scan(embeddings, *backward_weights, reverse=True)
    T = embeddings.shape[0]
    states = concat([hf, hb], axis=1)
    summary = concat([index(hf, T - 1), index(hb, 0)], axis=0)
    return states, summary
