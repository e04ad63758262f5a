"""LSTM cell and graph attention layer, forward and backward, batched over leading axes.

Row-vector convention throughout: ``y = x @ W``. Every ``*_backward`` takes
the cache its forward returned plus the upstream gradient and returns
``(grad_input..., grads_of_params)``.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_step(x, h, c, w_ih, w_hh, b):
    """One LSTM cell step; gate order in the 4H axis is input, forget, cell, output."""
    hd = h.shape[-1]
    z = x @ w_ih + h @ w_hh + b
    # sigmoid(u) = (1 + tanh(u / 2)) / 2, so one tanh call covers all four gates
    scale = np.full(4 * hd, 0.5)
    scale[2 * hd : 3 * hd] = 1.0
    act = np.tanh(z * scale)
    i = 0.5 * (1.0 + act[..., :hd])
    f = 0.5 * (1.0 + act[..., hd : 2 * hd])
    g = act[..., 2 * hd : 3 * hd]
    o = 0.5 * (1.0 + act[..., 3 * hd :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, g, o, tc)


def lstm_step_backward(dh, dc, cache, w_ih, w_hh):
    x, h, c, i, f, g, o, tc = cache
    dc = dc + dh * o * (1.0 - tc * tc)
    do = dh * tc
    di = dc * g
    dg = dc * i
    df = dc * c
    dz = np.concatenate(
        [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=-1
    )
    x2 = x.reshape(-1, x.shape[-1])
    h2 = h.reshape(-1, h.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    grads = {"w_ih": x2.T @ dz2, "w_hh": h2.T @ dz2, "b": dz2.sum(axis=0)}
    dx = dz @ w_ih.T
    dh_prev = dz @ w_hh.T
    dc_prev = dc * f
    return dx, dh_prev, dc_prev, grads


def attention_scores(m, w, a, mask=None):
    """Softmax over neighbours of ReLU(a . [W m_i || W m_j]).

    ``m`` is (..., N, D_in); ``mask`` is a boolean (N, N) neighbourhood
    (self-loops included), defaulting to the complete graph with self-loops.
    Returns ``(alpha, cache)`` with ``alpha`` of shape (..., N, N).
    """
    wm = m @ w
    d_out = w.shape[1]
    src = wm @ a[:d_out]
    dst = wm @ a[d_out:]
    logits = src[..., :, None] + dst[..., None, :]
    score = np.maximum(logits, 0.0)
    n = m.shape[-2]
    if mask is None:
        mask = np.ones((n, n), dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("every node needs at least one neighbour")
    score = np.where(mask, score, -np.inf)
    score = score - score.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(score), 0.0)
    alpha = e / e.sum(axis=-1, keepdims=True)
    return alpha, (wm, logits, mask)


def gat_layer(m, w, a, mask=None):
    """s_i = ReLU(sum_j alpha_ij W m_j)."""
    alpha, (wm, logits, mask) = attention_scores(m, w, a, mask)
    agg = alpha @ wm
    return np.maximum(agg, 0.0), (m, wm, logits, mask, alpha, agg)


def gat_layer_backward(dout, cache, w, a):
    m, wm, logits, mask, alpha, agg = cache
    d_out = w.shape[1]
    dagg = dout * (agg > 0)
    dalpha = dagg @ np.swapaxes(wm, -1, -2)
    dwm = np.swapaxes(alpha, -1, -2) @ dagg
    dscore = alpha * (dalpha - (alpha * dalpha).sum(axis=-1, keepdims=True))
    dlogits = np.where(mask & (logits > 0), dscore, 0.0)
    dsrc = dlogits.sum(axis=-1)
    ddst = dlogits.sum(axis=-2)
    dwm = dwm + dsrc[..., None] * a[:d_out] + ddst[..., None] * a[d_out:]
    wm2 = wm.reshape(-1, d_out)
    da = np.concatenate([dsrc.reshape(-1) @ wm2, ddst.reshape(-1) @ wm2])
    dw = m.reshape(-1, m.shape[-1]).T @ dwm.reshape(-1, d_out)
    dm = dwm @ w.T
    return dm, {"w": dw, "a": da}
