"""Forward pass, loss and exact reverse-mode gradients of the spatiotemporal graph network.

The network maps one view's object histories (positions over T frames) to a
one-step-ahead position per object:

    deltas -> LSTM encoder -> m (temporal embedding)
    m -> GAT(32->16) -> GAT(16->32) -> s (spatial embedding)
    h = m || s -> decoder initial hidden state via dec.init
    decoder LSTM step on the last delta -> out layer -> predicted delta
    prediction = last position + predicted delta

Arrays carry a leading batch axis B and an object axis N; graphs are the
complete graph over the N objects plus self-loops unless a mask is given.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import CountMismatch, TrajectoryHistory, symmetrize
from . import layers
from .params import PARAM_NAMES, ModelParams


class HistoryTooShort(ValueError):
    pass


class RaggedHistories(ValueError):
    pass


@dataclass(frozen=True)
class ProcessNoise:
    q: np.ndarray

    @classmethod
    def isotropic(cls, q: float) -> "ProcessNoise":
        if q < 0:
            raise ValueError("process noise must be nonnegative")
        return cls(q * np.eye(3))


def lstm_encode_step(h, c, delta_z, params: ModelParams):
    """Advance the motion encoder by one relative displacement; returns ``(h, c)``."""
    h, c, _ = layers.lstm_step(
        np.asarray(delta_z, dtype=float), h, c, params["enc.w_ih"], params["enc.w_hh"], params["enc.b"]
    )
    return h, c


def _as_batch(positions) -> tuple[np.ndarray, bool]:
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 3:
        return positions[None], True
    if positions.ndim != 4 or positions.shape[-1] != 3:
        raise ValueError(f"positions must be (N, T, 3) or (B, N, T, 3), got {positions.shape}")
    return positions, False


def _forward(positions: np.ndarray, params: ModelParams, mask=None):
    if positions.shape[-2] < 2:
        raise HistoryTooShort(f"need at least 2 frames, got {positions.shape[-2]}")
    p = params.tensors
    hidden = params.hidden_dim
    deltas = np.diff(positions, axis=-2)
    lead = positions.shape[:-2]
    h = np.zeros(lead + (hidden,))
    c = np.zeros_like(h)
    enc_caches = []
    for k in range(deltas.shape[-2]):
        h, c, cache = layers.lstm_step(deltas[..., k, :], h, c, p["enc.w_ih"], p["enc.w_hh"], p["enc.b"])
        enc_caches.append(cache)
    m = h
    s1, gat1_cache = layers.gat_layer(m, p["gat1.w"], p["gat1.a"], mask)
    s, gat2_cache = layers.gat_layer(s1, p["gat2.w"], p["gat2.a"], mask)
    st = np.concatenate([m, s], axis=-1)
    hd0 = st @ p["dec.init"]
    hd, _, dec_cache = layers.lstm_step(
        deltas[..., -1, :], hd0, np.zeros_like(hd0), p["dec.w_ih"], p["dec.w_hh"], p["dec.b"]
    )
    step = hd @ p["out.w"] + p["out.b"]
    pred = positions[..., -1, :] + step
    cache = (enc_caches, gat1_cache, gat2_cache, st, dec_cache, hd)
    return pred, cache


def _backward(dpred: np.ndarray, cache, params: ModelParams) -> dict[str, np.ndarray]:
    p = params.tensors
    hidden = params.hidden_dim
    enc_caches, gat1_cache, gat2_cache, st, dec_cache, hd = cache
    grads = {}

    d2 = dpred.reshape(-1, 3)
    grads["out.w"] = hd.reshape(-1, hidden).T @ d2
    grads["out.b"] = d2.sum(axis=0)
    dhd = dpred @ p["out.w"].T

    _, dhd0, _, g = layers.lstm_step_backward(dhd, np.zeros_like(dhd), dec_cache, p["dec.w_ih"], p["dec.w_hh"])
    grads.update({"dec." + k: v for k, v in g.items()})
    grads["dec.init"] = st.reshape(-1, 2 * hidden).T @ dhd0.reshape(-1, hidden)
    dst = dhd0 @ p["dec.init"].T

    dm = dst[..., :hidden]
    ds1, g = layers.gat_layer_backward(dst[..., hidden:], gat2_cache, p["gat2.w"], p["gat2.a"])
    grads.update({"gat2." + k: v for k, v in g.items()})
    dm_gat, g = layers.gat_layer_backward(ds1, gat1_cache, p["gat1.w"], p["gat1.a"])
    grads.update({"gat1." + k: v for k, v in g.items()})
    dh = dm + dm_gat

    dc = np.zeros_like(dh)
    enc = {k: np.zeros_like(p["enc." + k]) for k in ("w_ih", "w_hh", "b")}
    for cache_k in reversed(enc_caches):
        _, dh, dc, g = layers.lstm_step_backward(dh, dc, cache_k, p["enc.w_ih"], p["enc.w_hh"])
        for k, v in g.items():
            enc[k] += v
    grads.update({"enc." + k: v for k, v in enc.items()})
    return {name: grads[name] for name in PARAM_NAMES}


def predict(positions, params: ModelParams, mask=None) -> np.ndarray:
    """Array-level forward: (N, T, 3) -> (N, 3) or (B, N, T, 3) -> (B, N, 3)."""
    batch, squeeze = _as_batch(positions)
    pred, _ = _forward(batch, params, mask)
    return pred[0] if squeeze else pred


def loss(predictions, ground_truth) -> float:
    """Mean over objects of the squared Euclidean error."""
    predictions = np.asarray(predictions, dtype=float)
    ground_truth = np.asarray(ground_truth, dtype=float)
    if predictions.shape != ground_truth.shape:
        raise CountMismatch(f"{predictions.shape} predictions vs {ground_truth.shape} targets")
    err = predictions - ground_truth
    return float(np.mean(np.sum(err * err, axis=-1)))


def loss_and_grad(positions, ground_truth, params: ModelParams, mask=None):
    batch, _ = _as_batch(positions)
    truth = np.asarray(ground_truth, dtype=float).reshape(batch.shape[:-2] + (3,))
    pred, cache = _forward(batch, params, mask)
    err = pred - truth
    count = err.size // 3
    dpred = (2.0 / count) * err
    return float(np.sum(err * err) / count), _backward(dpred, cache, params)


def histories_to_positions(histories: Sequence[TrajectoryHistory]) -> np.ndarray:
    if not histories:
        raise ValueError("no histories")
    times = [tuple(t for t, _ in h.entries) for h in histories]
    if any(t != times[0] for t in times[1:]):
        raise RaggedHistories("all histories must cover the same time indices")
    if len(times[0]) < 2:
        raise HistoryTooShort("need at least 2 frames")
    return np.stack([h.positions for h in histories])


def forward(histories: Sequence[TrajectoryHistory], params: ModelParams) -> np.ndarray:
    """Predict each object's next position from one view's histories; returns (N, 3)."""
    return predict(histories_to_positions(histories), params)


def backward(histories: Sequence[TrajectoryHistory], ground_truth, params: ModelParams) -> dict[str, np.ndarray]:
    _, grads = loss_and_grad(histories_to_positions(histories), ground_truth, params)
    return grads


def propagate_uncertainty(p_prev, q) -> np.ndarray:
    q = q.q if isinstance(q, ProcessNoise) else np.asarray(q, dtype=float)
    return symmetrize(np.asarray(p_prev, dtype=float) + q)
