"""Linear Kalman filter and the constant-velocity tracking baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GaussianBelief, TrajectoryHistory, symmetrize


class DimensionMismatch(ValueError):
    pass


class SingularInnovation(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LinearGaussianModel:
    f: np.ndarray
    h: np.ndarray
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        f, h, q, r = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (self.f, self.h, self.q, self.r))
        d = f.shape[0]
        if f.shape != (d, d) or q.shape != (d, d) or h.shape[1] != d or r.shape != (h.shape[0],) * 2:
            raise DimensionMismatch(
                f"inconsistent model shapes F{f.shape} H{h.shape} Q{q.shape} R{r.shape}"
            )
        for name, a in zip("fhqr", (f, h, q, r)):
            object.__setattr__(self, name, a)

    @property
    def dim(self) -> int:
        return self.f.shape[0]


@dataclass(frozen=True)
class KfState:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1, 1)
        p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if p.shape != (x.shape[0],) * 2:
            raise DimensionMismatch(f"state {x.shape} vs covariance {p.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)


def _check(s: KfState, m: LinearGaussianModel):
    if s.x.shape[0] != m.dim:
        raise DimensionMismatch(f"state dim {s.x.shape[0]} vs model dim {m.dim}")


def kf_predict(s: KfState, m: LinearGaussianModel) -> KfState:
    _check(s, m)
    return KfState(m.f @ s.x, symmetrize(m.f @ s.p @ m.f.T + m.q))


def kalman_gain(s: KfState, m: LinearGaussianModel) -> np.ndarray:
    """K = P H^T (H P H^T + R)^-1, solved rather than inverted."""
    _check(s, m)
    pht = s.p @ m.h.T
    innov = m.h @ pht + m.r
    if not np.all(np.isfinite(innov)):
        raise SingularInnovation("non-finite innovation covariance")
    try:
        # K S = P H^T  <=>  S^T K^T = (P H^T)^T
        k = np.linalg.solve(innov.T, pht.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    if np.linalg.cond(innov) > 1e15:
        raise SingularInnovation("innovation covariance is numerically singular")
    return k


def kf_update(s: KfState, z, m: LinearGaussianModel) -> KfState:
    k = kalman_gain(s, m)
    z = np.asarray(z, dtype=float).reshape(-1, 1)
    if z.shape[0] != m.h.shape[0]:
        raise DimensionMismatch(f"measurement dim {z.shape[0]} vs H rows {m.h.shape[0]}")
    x = s.x + k @ (z - m.h @ s.x)
    p = (np.eye(m.dim) - k @ m.h) @ s.p
    return KfState(x, symmetrize(p))


def constant_velocity_model(dt: float, r, q: float = 0.5) -> LinearGaussianModel:
    """6-state [position, velocity] model: F = [[I, dt I], [0, I]], H = [I, 0], Q = q diag(dt^2 I, I)."""
    eye, zero = np.eye(3), np.zeros((3, 3))
    f = np.block([[eye, dt * eye], [zero, eye]])
    h = np.hstack([eye, zero])
    qm = q * np.diag([dt * dt] * 3 + [1.0] * 3)
    return LinearGaussianModel(f, h, qm, r)


def cv_track(history: TrajectoryHistory, dt: float, q: float = 0.5, velocity_var: float = 100.0) -> GaussianBelief:
    """Filter a history with a constant-velocity model and predict one step past its end.

    Each entry's covariance is used as that frame's measurement noise. The
    filter starts at the first measurement with zero velocity and covariance
    ``diag(R_0, velocity_var I)``.
    """
    entries = history.entries
    if len(entries) < 2:
        raise ValueError("cv_track needs at least two history entries")
    first = entries[0][1]
    p0 = np.zeros((6, 6))
    p0[:3, :3] = first.cov
    p0[3:, 3:] = velocity_var * np.eye(3)
    state = KfState(np.concatenate([first.mean, np.zeros(3)]), p0)
    model = constant_velocity_model(dt, first.cov, q)
    for _, belief in entries[1:]:
        state = kf_predict(state, model)
        model = LinearGaussianModel(model.f, model.h, model.q, belief.cov)
        state = kf_update(state, belief.mean, model)
    state = kf_predict(state, model)
    return GaussianBelief(state.x[:3, 0], state.p[:3, :3])
