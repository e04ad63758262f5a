"""Multi-view fusion gains and the spatiotemporal graph filter loop.

The learned estimate ``(x, P)`` of one object is fused with the measurements
``(z_v, R_v)`` of every view reporting it, in information form:

    P_hat = (P^-1 + sum_v R_v^-1)^-1
    E     = P_hat P^-1
    M_v   = P_hat R_v^-1
    x_hat = E x + sum_v M_v z_v

With a single view ``M`` is the Kalman gain for ``H = I`` and ``P_hat`` the
Kalman posterior covariance; ``verify_theorem1`` / ``verify_theorem2`` check
that equivalence numerically against the independent solver in
:mod:`stgf.kalman`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import CountMismatch, GaussianBelief, ObservationGraph, invert_spd, symmetrize
from .kalman import KfState, LinearGaussianModel, kalman_gain, kf_update
from .stgnn.model import ProcessNoise, predict, propagate_uncertainty
from .stgnn.params import ModelParams

INITIAL_COV = 10000.0
WRITEBACK_MODES = ("fused", "learned", "raw")


class EmptyViews(ValueError):
    pass


class ObjectSetMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FusionGains:
    e: np.ndarray
    m_per_view: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class FusedEstimate:
    belief: GaussianBelief
    contributing_views: tuple[int, ...]
    learned: GaussianBelief | None = None


def _information(p, r_all):
    if len(r_all) == 0:
        raise EmptyViews("no reporting views to fuse")
    p_inv = invert_spd(p)
    r_invs = [invert_spd(r) for r in r_all]
    total = p_inv.copy()
    for r_inv in r_invs:
        total += r_inv
    return p_inv, r_invs, invert_spd(total)


def estimation_gain(p, r_all: Sequence) -> np.ndarray:
    p_inv, _, p_hat = _information(p, r_all)
    return p_hat @ p_inv


def measurement_gain(p, r_all: Sequence, v: int) -> np.ndarray:
    if not 0 <= v < len(r_all):
        raise IndexError(f"view index {v} out of range for {len(r_all)} views")
    _, r_invs, p_hat = _information(p, r_all)
    return p_hat @ r_invs[v]


def fusion_gains(p, r_all: Sequence) -> FusionGains:
    p_inv, r_invs, p_hat = _information(p, r_all)
    return FusionGains(p_hat @ p_inv, tuple(p_hat @ ri for ri in r_invs))


def fuse_state(x, z_all: Sequence, gains: FusionGains) -> np.ndarray:
    if len(z_all) != len(gains.m_per_view):
        raise CountMismatch(f"{len(z_all)} measurements for {len(gains.m_per_view)} gains")
    out = gains.e @ np.asarray(x, dtype=float)
    for m, z in zip(gains.m_per_view, z_all):
        out = out + m @ np.asarray(z, dtype=float)
    return out


def fuse_uncertainty(p, r_all: Sequence) -> np.ndarray:
    return _information(p, r_all)[2]


def fuse(x, p, z_all: Sequence, r_all: Sequence) -> GaussianBelief:
    """Fused belief of one object; with no reporting views the learned belief is returned."""
    if len(z_all) != len(r_all):
        raise CountMismatch(f"{len(z_all)} measurements vs {len(r_all)} covariances")
    if not r_all:
        return GaussianBelief(x, p)
    p_inv, r_invs, p_hat = _information(p, r_all)
    x_hat = p_hat @ (p_inv @ np.asarray(x, dtype=float))
    for r_inv, z in zip(r_invs, z_all):
        x_hat = x_hat + p_hat @ (r_inv @ np.asarray(z, dtype=float))
    return GaussianBelief(x_hat, p_hat)


# -- the filter loop -----------------------------------------------------------

Predictor = Callable[[np.ndarray], np.ndarray]


def as_predictor(model) -> Predictor:
    """Turn ModelParams (or an existing callable) into ``positions (B, N, T, 3) -> (B, N, 3)``."""
    if isinstance(model, ModelParams):
        return lambda positions: predict(positions, model)
    if callable(model):
        return model
    raise TypeError(f"expected ModelParams or a callable, got {type(model).__name__}")


@dataclass
class FilterState:
    """Per-view, per-object belief histories that the filter appends to each step.

    ``means`` is (views, objects, T, 3) and ``covs`` (views, objects, 3, 3)
    holds each object's latest covariance.
    """

    view_ids: tuple[int, ...]
    object_ids: tuple[int, ...]
    means: np.ndarray
    covs: np.ndarray
    times: list[int] = field(default_factory=list)

    @classmethod
    def seed(cls, first: Sequence[ObservationGraph], second: Sequence[ObservationGraph],
             initial_cov: float = INITIAL_COV) -> "FilterState":
        """Start histories from two frames of raw measurements with covariance ``initial_cov * I``."""
        view_ids = tuple(g.view_id for g in first)
        if tuple(g.view_id for g in second) != view_ids:
            raise ObjectSetMismatch("seeding frames list different views")
        object_ids = tuple(sorted(first[0].object_ids)) if first else ()
        for g in (*first, *second):
            if tuple(sorted(g.object_ids)) != object_ids:
                raise ObjectSetMismatch(
                    f"view {g.view_id} at t={g.time_index} reports {sorted(g.object_ids)}, expected {list(object_ids)}"
                )
        means = np.stack(
            [
                np.stack([[g1.belief(i).mean, g2.belief(i).mean] for i in object_ids])
                for g1, g2 in zip(first, second)
            ]
        )
        covs = np.broadcast_to(initial_cov * np.eye(3), (len(view_ids), len(object_ids), 3, 3)).copy()
        times = [first[0].time_index, second[0].time_index] if first else []
        return cls(view_ids, object_ids, means, covs, times)


def stgf_step(
    state: FilterState,
    measurements: Sequence[ObservationGraph],
    model,
    q,
    writeback: str = "fused",
) -> dict[tuple[int, int], FusedEstimate]:
    """Advance every view's filter by one frame and append the chosen beliefs to the histories.

    For each view the network predicts every object from that view's history,
    the covariance grows by ``q``, and the prediction is fused with the
    measurements of that object from all views reporting it at this frame.
    Returns ``{(view_id, object_id): FusedEstimate}``.
    """
    if writeback not in WRITEBACK_MODES:
        raise ValueError(f"writeback must be one of {WRITEBACK_MODES}")
    q = q if isinstance(q, ProcessNoise) else ProcessNoise.isotropic(float(q))
    if tuple(g.view_id for g in measurements) != state.view_ids:
        raise ObjectSetMismatch(
            f"measurements from views {[g.view_id for g in measurements]}, filter tracks {list(state.view_ids)}"
        )
    known = set(state.object_ids)
    reports: dict[int, list[tuple[int, GaussianBelief]]] = {i: [] for i in state.object_ids}
    for g in measurements:
        for oid, belief in g.nodes:
            if oid not in known:
                raise ObjectSetMismatch(f"view {g.view_id} reports unknown object {oid}")
            reports[oid].append((g.view_id, belief))

    learned = np.asarray(as_predictor(model)(state.means), dtype=float)
    n_views, n_obj = len(state.view_ids), len(state.object_ids)
    if learned.shape != (n_views, n_obj, 3):
        raise ValueError(f"predictor returned shape {learned.shape}, expected {(n_views, n_obj, 3)}")

    results = {}
    new_means = np.empty((n_views, n_obj, 3))
    new_covs = np.empty((n_views, n_obj, 3, 3))
    own = {g.view_id: dict(g.nodes) for g in measurements}
    for a, vid in enumerate(state.view_ids):
        for b, oid in enumerate(state.object_ids):
            x = learned[a, b]
            p = propagate_uncertainty(state.covs[a, b], q)
            rep = reports[oid]
            fused = fuse(x, p, [bl.mean for _, bl in rep], [bl.cov for _, bl in rep])
            results[(vid, oid)] = FusedEstimate(fused, tuple(v for v, _ in rep), GaussianBelief(x, p))
            if writeback == "fused":
                new_means[a, b], new_covs[a, b] = fused.mean, fused.cov
            elif writeback == "learned":
                new_means[a, b], new_covs[a, b] = x, p
            else:
                raw = own[vid].get(oid)
                src = raw if raw is not None else GaussianBelief(x, p)
                new_means[a, b], new_covs[a, b] = src.mean, src.cov
    state.means = np.concatenate([state.means, new_means[:, :, None, :]], axis=2)
    state.covs = new_covs
    state.times.append(measurements[0].time_index if measurements else len(state.times))
    return results


# -- single-view equivalence with the Kalman update --------------------------------

@dataclass(frozen=True)
class TheoremReport:
    trials: int
    max_deviation: float
    tolerance: float
    failures: int

    @property
    def passed(self) -> bool:
        return self.failures == 0


def random_spd(rng: np.random.Generator, scale: float = 1.0, dim: int = 3) -> np.ndarray:
    """A x A^T + 0.1 I with A uniform in [-1, 1], times ``scale``; exactly symmetric."""
    a = rng.uniform(-1.0, 1.0, size=(dim, dim))
    return symmetrize(scale * (a @ a.T + 0.1 * np.eye(dim)))


def _kalman_reference(p, r):
    model = LinearGaussianModel(np.eye(3), np.eye(3), np.zeros((3, 3)), r)
    state = KfState(np.zeros(3), p)
    return kalman_gain(state, model)


def verify_theorem1(trials: int, seed: int, tol: float = 1e-9, pairs=None) -> TheoremReport:
    """Max |M - K| over random SPD (P, R): single-view measurement gain vs Kalman gain."""
    return _verify(trials, seed, tol, pairs, lambda p, r, k: measurement_gain(p, [r], 0) - k)


def verify_theorem2(trials: int, seed: int, tol: float = 1e-9, pairs=None) -> TheoremReport:
    """Max |P_hat - (I - K) P| over random SPD (P, R)."""
    return _verify(trials, seed, tol, pairs, lambda p, r, k: fuse_uncertainty(p, [r]) - (np.eye(3) - k) @ p)


def _verify(trials, seed, tol, pairs, diff) -> TheoremReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if pairs is None:
        rng = np.random.Generator(np.random.PCG64(seed))
        pairs = ((random_spd(rng), random_spd(rng)) for _ in range(trials))
    worst, failures, count = 0.0, 0, 0
    for p, r in pairs:
        dev = float(np.max(np.abs(diff(p, r, _kalman_reference(p, r)))))
        worst = max(worst, dev)
        failures += dev >= tol
        count += 1
    return TheoremReport(count, worst, tol, failures)


def single_view_update(x, p, z, r) -> GaussianBelief:
    """Kalman update of belief (x, P) by one measurement with H = I (the n = 1 oracle)."""
    model = LinearGaussianModel(np.eye(3), np.eye(3), np.zeros((3, 3)), r)
    s = kf_update(KfState(x, p), z, model)
    return GaussianBelief(s.x[:, 0], s.p)


