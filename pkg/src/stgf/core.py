"""Shared domain types and 3x3 SPD linear algebra.

Vectors are float64 arrays of shape (3,) and matrices float64 arrays of
shape (3, 3). The dataclasses below are frozen; treat the arrays they carry
as read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

SPD_TOL = 1e-9
DET_FLOOR = 1e-30


class NotSPD(ValueError):
    """A matrix that must be a covariance is not symmetric positive definite."""


class CountMismatch(ValueError):
    """Two paired sequences have different lengths."""


def vec3(values) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def mat3(values) -> np.ndarray:
    m = np.asarray(values, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite matrix")
    return m


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def is_spd(m, tol: float = SPD_TOL) -> bool:
    """True iff ``m`` is symmetric within ``tol`` and its smallest eigenvalue exceeds ``-tol``.

    The symmetry tolerance is scaled by ``max(1, max|m|)`` so that large
    covariances (1e4 scale) are judged on relative rounding error.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > tol * scale:
        return False
    return bool(np.linalg.eigvalsh(symmetrize(m))[0] > -tol)


def invert_spd(m) -> np.ndarray:
    """Invert a 3x3 SPD matrix through its adjugate.

    Positive definiteness is checked with Sylvester's criterion on the leading
    minors; the adjugate of an exactly symmetric matrix is exactly symmetric,
    so symmetric inputs give symmetric outputs bit for bit.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise NotSPD(f"expected a 3x3 matrix, got shape {m.shape}")
    (a, b, c), (d, e, f), (g, h, i) = m.tolist()
    scale = max(1.0, abs(a), abs(b), abs(c), abs(d), abs(e), abs(f), abs(g), abs(h), abs(i))
    if max(abs(b - d), abs(c - g), abs(f - h)) > SPD_TOL * scale:
        raise NotSPD(f"matrix is not symmetric:\n{m}")

    c00 = e * i - f * h
    c01 = f * g - d * i
    c02 = d * h - e * g
    det = a * c00 + b * c01 + c * c02
    if not (a > 0.0 and a * e - b * d > 0.0 and det > 0.0):
        raise NotSPD(f"matrix is not positive definite:\n{m}")
    if det < DET_FLOOR or not np.isfinite(det):
        raise NotSPD(f"determinant {det:g} below floor")

    inv_det = 1.0 / det
    return np.array(
        [
            [c00, c * h - b * i, b * f - c * e],
            [c01, a * i - c * g, c * d - a * f],
            [c02, b * g - a * h, a * e - b * d],
        ]
    ) * inv_det


def complete_edges(n_nodes: int) -> frozenset[tuple[int, int]]:
    """All unordered pairs ``(i, j)`` with ``i < j`` over ``n_nodes`` nodes."""
    if n_nodes < 1:
        raise ValueError("need at least one node")
    return frozenset(combinations(range(n_nodes), 2))


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", vec3(self.mean))
        object.__setattr__(self, "cov", mat3(self.cov))


@dataclass(frozen=True)
class ObservationGraph:
    """One view's observation at one frame: measurement nodes plus a complete edge set."""

    view_id: int
    time_index: int
    nodes: tuple[tuple[int, GaussianBelief], ...]
    edges: frozenset = field(default=None)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        ids = [oid for oid, _ in nodes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids in view {self.view_id}: {ids}")
        object.__setattr__(self, "nodes", nodes)
        if self.edges is None:
            edges = frozenset(
                (ids[i], ids[j]) for i, j in complete_edges(len(ids))
            ) if ids else frozenset()
            object.__setattr__(self, "edges", edges)
        else:
            known = set(ids)
            for i, j in self.edges:
                if i not in known or j not in known:
                    raise ValueError(f"edge ({i}, {j}) references a missing node")

    @property
    def object_ids(self) -> tuple[int, ...]:
        return tuple(oid for oid, _ in self.nodes)

    def belief(self, object_id: int) -> GaussianBelief:
        for oid, b in self.nodes:
            if oid == object_id:
                return b
        raise KeyError(object_id)


@dataclass(frozen=True)
class TrajectoryHistory:
    view_id: int
    object_id: int
    entries: tuple[tuple[int, GaussianBelief], ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if len(entries) < 2:
            raise ValueError("a trajectory history needs at least two entries")
        times = [t for t, _ in entries]
        if any(b - a != 1 for a, b in zip(times, times[1:])):
            raise ValueError(f"time indices must be contiguous and increasing: {times}")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    @property
    def positions(self) -> np.ndarray:
        return np.stack([b.mean for _, b in self.entries])

    @property
    def last(self) -> GaussianBelief:
        return self.entries[-1][1]
