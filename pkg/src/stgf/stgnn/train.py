"""Minibatch training of the spatiotemporal graph network on raw measurement histories."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import loss_and_grad, predict
from .params import PARAM_NAMES, ModelParams

log = logging.getLogger(__name__)


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    seed: int = 0
    batch_size: int = 32
    clip_norm: float = 5.0
    optimizer: str = "adam"
    momentum: float = 0.9
    max_views: int | None = None


@dataclass
class TrainResult:
    params: ModelParams
    loss_curve: list[float] = field(default_factory=list)


def build_samples(dataset, max_views: int | None = None) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Teacher-forced one-step samples grouped by history length.

    For every instance, view and frame k >= 2 the input is that view's raw
    measurements over frames 0..k-1 and the target is the true position at
    frame k. Views missing any detection in the window are skipped.
    Returns ``{k: (positions (S, N, k, 3), targets (S, N, 3))}``.
    """
    groups: dict[int, tuple[list, list]] = {}
    for inst in dataset:
        observed = inst.observed()
        n_views = inst.n_views if max_views is None else min(max_views, inst.n_views)
        for v in range(n_views):
            for k in range(2, inst.n_frames):
                if not observed[v, : k].all():
                    continue
                xs, ys = groups.setdefault(k, ([], []))
                xs.append(np.swapaxes(inst.z[v, :k], 0, 1))
                ys.append(inst.truth[k])
    return {k: (np.stack(xs), np.stack(ys)) for k, (xs, ys) in sorted(groups.items())}


def _batches(samples, batch_size, rng):
    batches = []
    for k, (xs, _) in samples.items():
        order = rng.permutation(len(xs))
        for start in range(0, len(order), batch_size):
            batches.append((k, order[start : start + batch_size]))
    perm = rng.permutation(len(batches))
    return [batches[i] for i in perm]


def train(dataset, config: TrainConfig = TrainConfig(), init: ModelParams | None = None) -> TrainResult:
    """Fit the network; deterministic given ``config.seed``.

    ``optimizer`` is ``"sgd"`` (plain gradient descent), ``"momentum"`` or
    ``"adam"``; every step first clips the global gradient norm to
    ``clip_norm``.
    """
    if not dataset:
        raise EmptyDataset("cannot train on an empty dataset")
    samples = build_samples(dataset, config.max_views)
    if not samples:
        raise EmptyDataset("dataset yields no complete training windows")
    params = init.copy() if init is not None else ModelParams.initialize(config.seed)
    rng = np.random.Generator(np.random.PCG64(config.seed + 1))
    state = {n: np.zeros_like(params[n]) for n in PARAM_NAMES}
    state2 = {n: np.zeros_like(params[n]) for n in PARAM_NAMES}
    step = 0
    curve = []
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        for k, idx in _batches(samples, config.batch_size, rng):
            xs, ys = samples[k]
            value, grads = loss_and_grad(xs[idx], ys[idx], params)
            total += value * len(idx)
            count += len(idx)
            norm = np.sqrt(sum(float(np.sum(grads[n] ** 2)) for n in PARAM_NAMES))
            scale = min(1.0, config.clip_norm / norm) if norm > 0 else 1.0
            step += 1
            for n in PARAM_NAMES:
                g = grads[n] * scale
                if config.optimizer == "sgd":
                    update = g
                elif config.optimizer == "momentum":
                    state[n] = config.momentum * state[n] + g
                    update = state[n]
                elif config.optimizer == "adam":
                    state[n] = 0.9 * state[n] + 0.1 * g
                    state2[n] = 0.999 * state2[n] + 0.001 * g * g
                    m_hat = state[n] / (1 - 0.9 ** step)
                    v_hat = state2[n] / (1 - 0.999 ** step)
                    update = m_hat / (np.sqrt(v_hat) + 1e-8)
                else:
                    raise ValueError(f"unknown optimizer {config.optimizer!r}")
                params.tensors[n] -= config.learning_rate * update
        curve.append(total / count)
        log.info("epoch %d loss %.6f", epoch + 1, curve[-1])
    return TrainResult(params, curve)


def one_step_errors(params: ModelParams, dataset, max_views: int | None = None) -> np.ndarray:
    """Per-sample squared one-step errors of the network on raw histories, shape (S*N, 3)."""
    out = []
    for k, (xs, ys) in build_samples(dataset, max_views).items():
        out.append((predict(xs, params) - ys).reshape(-1, 3))
    return np.concatenate(out) ** 2


def calibrate_process_noise(params: ModelParams, dataset, max_views: int | None = None) -> float:
    """Isotropic process-noise variance matched to the network's mean squared one-step error."""
    return float(one_step_errors(params, dataset, max_views).mean())
