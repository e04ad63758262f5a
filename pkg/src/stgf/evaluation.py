"""Localization metrics, the method comparison harness and CSV output."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fusion import FilterState, as_predictor, stgf_step
from .kalman import KfState, constant_velocity_model, kf_predict, kf_update
from .stgnn.model import predict

METHODS = ("stgf", "stgnn_only", "kalman_cv", "aom")
CSV_HEADER = ("method", "views", "instances", "de_mean", "de_std", "relde_mean", "relde_std", "runtime_ms")


class MissingModel(ValueError):
    pass


class ViewsOutOfRange(ValueError):
    pass


class DegenerateRange(ValueError):
    pass


def displacement_error(estimate, truth) -> float:
    return float(np.linalg.norm(np.asarray(estimate, dtype=float) - np.asarray(truth, dtype=float)))


def rel_displacement_error(estimate, truth, sensor) -> float:
    rng = float(np.linalg.norm(np.asarray(truth, dtype=float) - np.asarray(sensor, dtype=float)))
    if rng <= 1e-6:
        raise DegenerateRange("object coincides with the sensor")
    return displacement_error(estimate, truth) / rng


@dataclass
class MetricRow:
    method: str
    views_used: int
    n_instances: int
    de_mean: float
    de_std: float
    relde_mean: float
    relde_std: float
    runtime_ms: float
    # mean DE of each instance, for standard errors across instances
    instance_de: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def de_stderr(self) -> float:
        d = self.instance_de
        return float(np.std(d, ddof=1) / np.sqrt(len(d))) if d is not None and len(d) > 1 else float("nan")


@dataclass(frozen=True)
class EvalOptions:
    warmup_frames: int = 2
    q: float = 2000.0
    writeback: str = "fused"
    collapse: bool = False
    relde_origin: bool = False
    cv_q: float = 0.5
    cv_velocity_var: float = 100.0


def _stgf_estimates(inst, views, model, opts: EvalOptions) -> np.ndarray:
    est = np.full((inst.n_frames, len(views), inst.n_objects, 3), np.nan)
    state = FilterState.seed([inst.graph(v, 0) for v in views], [inst.graph(v, 1) for v in views])
    predictor = as_predictor(model)
    for t in range(2, inst.n_frames):
        res = stgf_step(state, [inst.graph(v, t) for v in views], predictor, opts.q, opts.writeback)
        for a, v in enumerate(views):
            for i in range(inst.n_objects):
                est[t, a, i] = res[(v, i)].belief.mean
    return est


def _require_complete(inst, views, method):
    if not inst.observed()[list(views)].all():
        raise ValueError(f"{method} needs every object detected in every frame (instance {inst.instance_id})")


def _stgnn_estimates(inst, views, model, opts) -> np.ndarray:
    _require_complete(inst, views, "stgnn_only")
    predictor = as_predictor(model)
    est = np.full((inst.n_frames, len(views), inst.n_objects, 3), np.nan)
    z = np.swapaxes(inst.z[list(views)], 1, 2)  # (V, N, F, 3)
    for t in range(2, inst.n_frames):
        est[t] = predictor(z[:, :, :t])
    return est


def _kalman_estimates(inst, views, opts) -> np.ndarray:
    """Constant-velocity tracking per view and object; the prediction for frame t uses frames < t.

    Runs the same predict/update sequence as :func:`stgf.kalman.cv_track` on
    each prefix, incrementally.
    """
    _require_complete(inst, views, "kalman_cv")
    dt = inst.config.dt
    est = np.full((inst.n_frames, len(views), inst.n_objects, 3), np.nan)
    for a, v in enumerate(views):
        for i in range(inst.n_objects):
            r0 = inst.r[v, 0, i]
            p0 = np.zeros((6, 6))
            p0[:3, :3] = r0
            p0[3:, 3:] = opts.cv_velocity_var * np.eye(3)
            state = KfState(np.concatenate([inst.z[v, 0, i], np.zeros(3)]), p0)
            model = constant_velocity_model(dt, r0, opts.cv_q)
            for t in range(1, inst.n_frames):
                state = kf_predict(state, model)
                if t >= 2:
                    est[t, a, i] = state.x[:3, 0]
                model = constant_velocity_model(dt, inst.r[v, t, i], opts.cv_q)
                state = kf_update(state, inst.z[v, t, i], model)
    return est


def _aom_estimates(inst, views) -> np.ndarray:
    z = inst.z[list(views)]  # (V, F, N, 3)
    mean = np.nanmean(z, axis=0)
    return np.broadcast_to(mean[:, None], (inst.n_frames, len(views), inst.n_objects, 3))


def instance_estimates(inst, method: str, views_used: int, model=None, opts: EvalOptions = EvalOptions()) -> np.ndarray:
    """Per-view estimates (frames, views_used, objects, 3); frames 0 and 1 are NaN except for aom."""
    views = tuple(range(views_used))
    if method == "stgf":
        return _stgf_estimates(inst, views, model, opts)
    if method == "stgnn_only":
        return _stgnn_estimates(inst, views, model, opts)
    if method == "kalman_cv":
        return _kalman_estimates(inst, views, opts)
    if method == "aom":
        return _aom_estimates(inst, views)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def score_instance(inst, est: np.ndarray, views_used: int, opts: EvalOptions):
    """DE and Rel-DE arrays over scored (frame, view, object) triples."""
    frames = slice(opts.warmup_frames, inst.n_frames)
    est = est[frames]
    if opts.collapse:
        est = np.broadcast_to(est.mean(axis=1, keepdims=True), est.shape)
    truth = inst.truth[frames][:, None]  # (F', 1, N, 3)
    de = np.linalg.norm(est - truth, axis=-1)
    if opts.relde_origin:
        rng = np.linalg.norm(truth, axis=-1)
    else:
        sensors = inst.sensors[:views_used][None, :, None, :]
        rng = np.linalg.norm(truth - sensors, axis=-1)
    if np.any(rng <= 1e-6):
        raise DegenerateRange(f"object coincides with a sensor in instance {inst.instance_id}")
    return de.ravel(), (de / rng).ravel()


def evaluate(dataset, model, method: str, views_used: int, warmup_frames: int = 2,
             opts: EvalOptions | None = None) -> MetricRow:
    opts = opts or EvalOptions()
    if warmup_frames != opts.warmup_frames:
        opts = EvalOptions(**{**opts.__dict__, "warmup_frames": warmup_frames})
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method in ("stgf", "stgnn_only") and model is None:
        raise MissingModel(f"method {method} needs a trained model")
    if opts.warmup_frames < 2:
        raise ValueError("warmup_frames must be >= 2: the learned methods need two frames of history")
    if not dataset:
        raise ValueError("empty dataset")
    n_views = min(inst.n_views for inst in dataset)
    if not 1 <= views_used <= n_views:
        raise ViewsOutOfRange(f"views_used={views_used} outside 1..{n_views}")
    if method in ("stgf", "stgnn_only"):
        model = as_predictor(model)

    start = time.perf_counter()
    des, rels, per_instance = [], [], []
    for inst in dataset:
        est = instance_estimates(inst, method, views_used, model, opts)
        de, rel = score_instance(inst, est, views_used, opts)
        des.append(de)
        rels.append(rel)
        per_instance.append(de.mean())
    runtime_ms = max((time.perf_counter() - start) * 1000.0, 1e-6)
    de = np.concatenate(des)
    rel = np.concatenate(rels)
    return MetricRow(
        method=method,
        views_used=views_used,
        n_instances=len(dataset),
        de_mean=float(de.mean()),
        de_std=float(de.std()),
        relde_mean=float(rel.mean()),
        relde_std=float(rel.std()),
        runtime_ms=runtime_ms,
        instance_de=np.array(per_instance),
    )


def sweep_views(dataset, model, method: str, min_views: int, max_views: int,
                opts: EvalOptions | None = None) -> list[MetricRow]:
    if not 1 <= min_views <= max_views:
        raise ViewsOutOfRange(f"need 1 <= min ({min_views}) <= max ({max_views})")
    opts = opts or EvalOptions()
    return [evaluate(dataset, model, method, k, opts.warmup_frames, opts) for k in range(min_views, max_views + 1)]


def _g6(x: float) -> str:
    return f"{x:.6g}"


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(
                [r.method, r.views_used, r.n_instances, _g6(r.de_mean), _g6(r.de_std),
                 _g6(r.relde_mean), _g6(r.relde_std), _g6(r.runtime_ms)]
            )


def read_csv(path) -> list[MetricRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [
            MetricRow(
                method=d["method"],
                views_used=int(d["views"]),
                n_instances=int(d["instances"]),
                de_mean=float(d["de_mean"]),
                de_std=float(d["de_std"]),
                relde_mean=float(d["relde_mean"]),
                relde_std=float(d["relde_std"]),
                runtime_ms=float(d["runtime_ms"]),
            )
            for d in reader
        ]


def plot_sweep(rows, path) -> None:
    """Line chart of DE mean against view count with a +-1 std band, saved as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    views = np.array([r.views_used for r in rows])
    mean = np.array([r.de_mean for r in rows])
    std = np.array([r.de_std for r in rows])
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.fill_between(views, mean - std, mean + std, alpha=0.25, linewidth=0)
    ax.plot(views, mean, marker="o")
    ax.set_xlabel("number of views")
    ax.set_ylabel("displacement error (m)")
    if rows:
        ax.set_title(rows[0].method)
    ax.set_xticks(views)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
