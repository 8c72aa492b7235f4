"""Layer primitives with hand-written backward passes.

Internally activations are channels-last, shape ``(batch, time, channels)``.
Each ``*_forward`` returns its output plus whatever the matching
``*_backward`` needs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch, ZeroVariance

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _fast_sigmoid(x):
    # 0.5 * (1 + tanh(x/2)) is overflow-free and cheaper than the masked form
    return 0.5 + 0.5 * np.tanh(0.5 * x)


# --- convolution --------------------------------------------------------------


def conv1d_forward(x, weight, bias):
    """Same-padded cross-correlation ``y[t] = sum_i w[i] x[t+i-pad] + b``.

    ``x`` is ``(B, T, C_in)``, ``weight`` is ``(C_out, C_in, K)`` with odd K.
    Computed as a single matrix product over unfolded windows; the unfolded
    input is returned for the backward pass.
    """
    c_out, c_in, k = weight.shape
    if k % 2 != 1:
        raise ShapeMismatch(f"kernel length must be odd, got {k}")
    if x.ndim != 3 or x.shape[2] != c_in:
        raise ShapeMismatch(f"expected input (B, T, {c_in}), got {x.shape}")
    if x.shape[1] < 1:
        raise ShapeMismatch("input length must be >= 1")
    pad = k // 2
    B, T, _ = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    # (B, T, C_in, K) -> rows of C_in*K, matching weight.reshape(C_out, -1)
    cols = sliding_window_view(xp, k, axis=1).reshape(B * T, c_in * k)
    y = cols @ weight.reshape(c_out, -1).T
    y += bias
    return y.reshape(B, T, c_out), cols


def conv1d_backward(dy, cols, weight):
    c_out, c_in, k = weight.shape
    pad = k // 2
    B, T, _ = dy.shape
    dy2 = dy.reshape(-1, c_out)
    dw = (dy2.T @ cols).reshape(weight.shape)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ weight.reshape(c_out, -1)).reshape(B, T, c_in, k)
    dxp = np.zeros((B, T + 2 * pad, c_in), dtype=dy.dtype)
    for i in range(k):
        dxp[:, i : i + T, :] += dcols[..., i]
    return dxp[:, pad : pad + T, :], dw, db


def conv1d(x, weight, bias):
    """Channels-first convenience wrapper: ``x`` is ``(C_in, L)`` or ``(B, C_in, L)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    xb = x[None] if single else x
    if xb.ndim != 3:
        raise ShapeMismatch(f"expected (C, L) or (B, C, L), got {x.shape}")
    y, _ = conv1d_forward(np.ascontiguousarray(xb.transpose(0, 2, 1)), weight, bias)
    y = y.transpose(0, 2, 1)
    return y[0] if single else y


# --- activation ---------------------------------------------------------------


def relu(x):
    return np.maximum(x, 0)


def relu_backward(dy, y):
    return dy * (y > 0)


# --- batch normalization ---------------------------------------------------------


def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode="train"):
    """Per-channel normalization over (batch, time).

    In train mode the batch statistics are used and the running statistics are
    updated in place (momentum 0.1, unbiased variance); eval mode uses the
    running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    axes = (0, 1)
    if mode == "train":
        n = x.shape[0] * x.shape[1]
        mean = x.mean(axis=axes)
        xc = x - mean
        var = (xc * xc).mean(axis=axes)
        unbiased = var * n / max(n - 1, 1)
        running_mean *= 1 - BN_MOMENTUM
        running_mean += BN_MOMENTUM * mean
        running_var *= 1 - BN_MOMENTUM
        running_var += BN_MOMENTUM * unbiased
    else:
        xc = x - running_mean
        var = running_var
    denom = var + BN_EPS
    if np.any(denom <= 0):
        raise ZeroVariance("variance + eps underflowed")
    inv_std = 1.0 / np.sqrt(denom)
    xhat = xc * inv_std
    return gamma * xhat + beta, (xhat, inv_std, gamma)


def batchnorm_backward(dy, cache):
    """Gradient through train-mode batch normalization."""
    xhat, inv_std, gamma = cache
    axes = (0, 1)
    n = xhat.shape[0] * xhat.shape[1]
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


# --- LSTM ---------------------------------------------------------------------


def _cell_step(xp_t, h_prev, c_prev, w_hh_t):
    """Gate math shared by the single cell and the sequence loop.

    ``xp_t`` already holds ``W_ih x_t + b``; gates are ordered i, f, g, o.
    """
    H = h_prev.shape[-1]
    z = xp_t + h_prev @ w_hh_t
    act = _fast_sigmoid(z)
    g = np.tanh(z[..., 2 * H : 3 * H])
    act[..., 2 * H : 3 * H] = g
    i = act[..., :H]
    f = act[..., H : 2 * H]
    o = act[..., 3 * H :]
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, act, tc


def lstm_cell(x_t, h_prev, c_prev, w_ih, w_hh, b):
    """One LSTM step.

    ``i = s(W_i [h, x] + b_i)``, ``f = s(W_f [h, x] + b_f)``,
    ``C = f*C_prev + i*tanh(W_c [h, x] + b_c)``, ``o = s(W_o [h, x] + b_o)``,
    ``h = o*tanh(C)``, with the stacked matrices split into input and
    recurrent parts: ``w_ih`` is ``(4H, I)``, ``w_hh`` is ``(4H, H)``.
    """
    H = w_hh.shape[1]
    if w_ih.shape[0] != 4 * H or w_hh.shape[0] != 4 * H or np.shape(b)[-1] != 4 * H:
        raise ShapeMismatch("gate matrices must have 4*hidden rows")
    if np.shape(x_t)[-1] != w_ih.shape[1] or np.shape(h_prev)[-1] != H or np.shape(c_prev)[-1] != H:
        raise ShapeMismatch("state or input width does not match the gate matrices")
    h, c, _, _ = _cell_step(np.asarray(x_t) @ w_ih.T + b, np.asarray(h_prev), np.asarray(c_prev), w_hh.T)
    return h, c


def bilstm_forward(x, fwd, bwd):
    """Bidirectional LSTM over ``x`` of shape ``(B, T, I)``.

    ``fwd`` and ``bwd`` are ``(w_ih, w_hh, b_ih, b_hh)`` tuples. Both
    directions start from zero state; the output at step t is
    ``[h_fwd_t ; h_bwd_t]`` with shape ``(B, T, 2H)``.
    """
    B, T, I = x.shape
    H = fwd[1].shape[1]
    for w_ih, w_hh, b_ih, b_hh in (fwd, bwd):
        if w_ih.shape != (4 * H, I) or w_hh.shape != (4 * H, H):
            raise ShapeMismatch(f"LSTM weights do not match input width {I} / hidden {H}")
    dtype = np.result_type(x, fwd[0])
    # direction 1 runs on the time-reversed sequence
    xs = np.stack([x, x[:, ::-1, :]])  # (2, B, T, I)
    w_ih = np.stack([fwd[0], bwd[0]])
    w_hh_t = np.stack([fwd[1].T, bwd[1].T])  # (2, H, 4H)
    bias = np.stack([fwd[2] + fwd[3], bwd[2] + bwd[3]])
    xp = xs @ w_ih.transpose(0, 2, 1)[:, None] + bias[:, None, None, :]  # (2, B, T, 4H)
    acts = np.empty((2, B, T, 4 * H), dtype=dtype)
    cs = np.empty((2, B, T, H), dtype=dtype)
    tcs = np.empty((2, B, T, H), dtype=dtype)
    hs = np.empty((2, B, T, H), dtype=dtype)
    h = np.zeros((2, B, H), dtype=dtype)
    c = np.zeros((2, B, H), dtype=dtype)
    for t in range(T):
        h, c, act, tc = _cell_step(xp[:, :, t], h, c, w_hh_t)
        acts[:, :, t] = act
        cs[:, :, t] = c
        tcs[:, :, t] = tc
        hs[:, :, t] = h
    out = np.concatenate([hs[0], hs[1][:, ::-1, :]], axis=-1)
    cache = (xs, w_ih, w_hh_t, acts, cs, tcs, hs)
    return out, cache


def bilstm_backward(dout, cache):
    """BPTT for :func:`bilstm_forward`.

    Returns ``dx`` and per-direction gradients ``(dw_ih, dw_hh, db)``; the
    bias gradient applies equally to ``b_ih`` and ``b_hh``.
    """
    xs, w_ih, w_hh_t, acts, cs, tcs, hs = cache
    _, B, T, H = hs.shape
    dh_all = np.stack([dout[..., :H], dout[:, ::-1, H:]])  # (2, B, T, H)
    dz_all = np.empty_like(acts)
    dh_next = np.zeros((2, B, H), dtype=hs.dtype)
    dc_next = np.zeros((2, B, H), dtype=hs.dtype)
    w_hh = w_hh_t.transpose(0, 2, 1)  # (2, 4H, H)
    zeros = np.zeros((2, B, H), dtype=hs.dtype)
    for t in range(T - 1, -1, -1):
        act = acts[:, :, t]
        i = act[..., :H]
        f = act[..., H : 2 * H]
        g = act[..., 2 * H : 3 * H]
        o = act[..., 3 * H :]
        tc = tcs[:, :, t]
        c_prev = cs[:, :, t - 1] if t > 0 else zeros
        dh = dh_all[:, :, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dz_all[:, :, t]
        dz[..., :H] = dc * g * i * (1.0 - i)
        dz[..., H : 2 * H] = dc * c_prev * f * (1.0 - f)
        dz[..., 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dz[..., 3 * H :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ w_hh
    h_prev = np.concatenate([np.zeros((2, B, 1, H), dtype=hs.dtype), hs[:, :, :-1]], axis=2)
    dz2 = dz_all.reshape(2, B * T, 4 * H)
    dw_hh = dz2.transpose(0, 2, 1) @ h_prev.reshape(2, B * T, H)
    dw_ih = dz2.transpose(0, 2, 1) @ xs.reshape(2, B * T, -1)
    db = dz2.sum(axis=1)
    dxs = dz_all @ w_ih[:, None]  # (2, B, T, I)
    dx = dxs[0] + dxs[1][:, ::-1, :]
    grads = [(dw_ih[d], dw_hh[d], db[d]) for d in range(2)]
    return dx, grads


# --- linear head --------------------------------------------------------------


def linear_forward(x, weight, bias):
    return x @ weight.T + bias


def linear_backward(dy, x, weight):
    n_out = weight.shape[0]
    dy2 = dy.reshape(-1, n_out)
    dw = dy2.T @ x.reshape(-1, x.shape[-1])
    db = dy2.sum(axis=0)
    dx = dy @ weight
    return dx, dw, db


# --- loss ---------------------------------------------------------------------


def softmax_xent(logits, labels, valid=None):
    """Mean softmax cross-entropy over valid timesteps and its logit gradient.

    ``logits`` is ``(B, T, K)``, ``labels`` integer ``(B, T)``, ``valid`` an
    optional 0/1 ``(B, T)`` weight excluding padding.
    """
    z = logits - logits.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logsum
    if valid is None:
        valid = np.ones(labels.shape, dtype=logits.dtype)
    n = valid.sum()
    picked = np.take_along_axis(logp, labels[..., None].astype(np.intp), axis=-1)[..., 0]
    loss = -(picked * valid).sum() / n
    grad = np.exp(logp)
    np.put_along_axis(
        grad,
        labels[..., None].astype(np.intp),
        np.take_along_axis(grad, labels[..., None].astype(np.intp), axis=-1) - 1.0,
        axis=-1,
    )
    grad *= (valid / n)[..., None]
    return float(loss), grad
