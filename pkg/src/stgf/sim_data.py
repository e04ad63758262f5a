"""Synthetic multi-view scenarios and their JSON Lines persistence.

Two scene kinds share one world frame with objects moving on the z = 0 plane:

* ``cad``: an intersection. Object 0 is a vehicle approaching from the west,
  object 1 a pedestrian on that approach's crosswalk, further objects are
  vehicles on the other approaches (some turning). With interaction on, a
  vehicle brakes to a stop when the pedestrian's projected path crosses its
  lane inside a lookahead window.
* ``mpl``: pedestrians walking across a plaza toward distant goals with
  pairwise repulsion (1/d falloff, capped).

Randomness is PCG64 seeded from ``SeedSequence([seed, instance_id, attempt])``
with Gaussian draws from the Box-Muller transform, so every stream is a fixed
function of the seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import GaussianBelief, ObservationGraph

FORMAT_VERSION = 1
MIN_VARIANCE = 1e-8
MAX_ATTEMPTS = 1000

_DEFAULTS = {
    "cad": dict(n_objects=3, n_views=4, n_frames=8, dt=0.1, sigma=0.5),
    "mpl": dict(n_objects=4, n_views=7, n_frames=20, dt=1.0 / 7.0, sigma=0.3),
}


class InvalidConfig(ValueError):
    pass


class FormatVersionMismatch(ValueError):
    pass


class SchemaError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "mpl"
    n_objects: int = 4
    n_views: int = 7
    n_frames: int = 20
    dt: float = 1.0 / 7.0
    noise_sigma_per_view: tuple[float, ...] = (0.3,) * 7
    view_bias_sigma: float = 0.1
    interaction_strength: float = 1.0
    seed: int = 0
    misreport_r: float = 1.0
    drop_prob: float = 0.0

    @classmethod
    def default(cls, kind: str, **overrides) -> "ScenarioConfig":
        if kind not in _DEFAULTS:
            raise InvalidConfig(f"unknown scenario kind {kind!r}")
        d = _DEFAULTS[kind]
        n_views = overrides.get("n_views", d["n_views"])
        sigma = overrides.pop("noise_sigma", d["sigma"])
        base = dict(
            kind=kind,
            n_objects=d["n_objects"],
            n_views=n_views,
            n_frames=d["n_frames"],
            dt=d["dt"],
            noise_sigma_per_view=(float(sigma),) * n_views,
        )
        base.update(overrides)
        return cls(**base)

    def validate(self) -> None:
        if self.kind not in _DEFAULTS:
            raise InvalidConfig(f"unknown scenario kind {self.kind!r}")
        if self.n_objects < 1 or self.n_views < 1:
            raise InvalidConfig("need at least one object and one view")
        if self.n_frames < 3:
            raise InvalidConfig("need at least 3 frames")
        if not self.dt > 0:
            raise InvalidConfig("dt must be positive")
        if len(self.noise_sigma_per_view) != self.n_views:
            raise InvalidConfig(
                f"{len(self.noise_sigma_per_view)} noise sigmas for {self.n_views} views"
            )
        if min(self.noise_sigma_per_view) < 0 or self.view_bias_sigma < 0:
            raise InvalidConfig("noise sigmas must be nonnegative")
        if self.interaction_strength < 0 or self.misreport_r <= 0:
            raise InvalidConfig("interaction_strength must be >= 0 and misreport_r > 0")
        if not 0.0 <= self.drop_prob < 1.0:
            raise InvalidConfig("drop_prob must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["noise_sigma_per_view"] = list(self.noise_sigma_per_view)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        d["noise_sigma_per_view"] = tuple(float(s) for s in d["noise_sigma_per_view"])
        return cls(**d)


@dataclass
class DataInstance:
    """One scenario: ground truth plus every view's measurements.

    ``z`` is (views, frames, objects, 3) with NaN rows for dropped detections;
    ``r`` is the matching (views, frames, objects, 3, 3) recorded covariance.
    """

    instance_id: int
    config: ScenarioConfig
    sensors: np.ndarray
    truth: np.ndarray
    noise_sigma: np.ndarray
    bias: np.ndarray
    z: np.ndarray
    r: np.ndarray
    retries: int = 0
    observations: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.observations = _LazyObservations(self)

    @property
    def n_views(self) -> int:
        return self.z.shape[0]

    @property
    def n_frames(self) -> int:
        return self.z.shape[1]

    @property
    def n_objects(self) -> int:
        return self.z.shape[2]

    def observed(self) -> np.ndarray:
        """Boolean (views, frames, objects) detection mask."""
        return ~np.isnan(self.z[..., 0])

    def graph(self, view: int, t: int) -> ObservationGraph:
        nodes = tuple(
            (i, GaussianBelief(self.z[view, t, i], self.r[view, t, i]))
            for i in range(self.n_objects)
            if not np.isnan(self.z[view, t, i, 0])
        )
        return ObservationGraph(view_id=view, time_index=t, nodes=nodes)

    def __eq__(self, other):
        if not isinstance(other, DataInstance):
            return NotImplemented
        arrays = ("sensors", "truth", "noise_sigma", "bias", "z", "r")
        return (
            self.instance_id == other.instance_id
            and self.config == other.config
            and self.retries == other.retries
            and all(np.array_equal(getattr(self, a), getattr(other, a), equal_nan=True) for a in arrays)
        )


class _LazyObservations:
    """``observations[v][t]`` -> ObservationGraph, built on access."""

    def __init__(self, inst: DataInstance):
        self._inst = inst

    def __len__(self):
        return self._inst.n_views

    def __getitem__(self, v):
        return [self._inst.graph(v, t) for t in range(self._inst.n_frames)]


def _normals(rng: np.random.Generator, shape) -> np.ndarray:
    n = int(np.prod(shape))
    half = (n + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1]
    u2 = rng.random(half)
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    return np.concatenate([rad * np.cos(ang), rad * np.sin(ang)])[:n].reshape(shape)


def _rng(seed: int, instance_id: int, attempt: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, instance_id, attempt])))


# -- mpl ---------------------------------------------------------------------

def _simulate_mpl(cfg: ScenarioConfig, rng: np.random.Generator):
    n = cfg.n_objects
    angles = 2 * np.pi * (np.arange(n) + rng.uniform(-0.3, 0.3, n)) / n
    radius = rng.uniform(2.5, 3.5, n)
    pos = np.stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(n)], axis=1)
    heading = angles + np.pi + rng.uniform(-0.4, 0.4, n)
    direction = np.stack([np.cos(heading), np.sin(heading), np.zeros(n)], axis=1)
    speed = rng.uniform(1.0, 1.6, n)
    goal = pos + 40.0 * direction
    vel = speed[:, None] * direction

    relax, gain, cap = 0.5, 0.6, 2.0
    truth = np.empty((cfg.n_frames, n, 3))
    for t in range(cfg.n_frames):
        truth[t] = pos
        to_goal = goal - pos
        desired = speed[:, None] * to_goal / np.linalg.norm(to_goal, axis=1, keepdims=True)
        acc = (desired - vel) / relax
        if cfg.interaction_strength > 0:
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    d = pos[i] - pos[j]
                    dist = max(float(np.linalg.norm(d)), 1e-6)
                    acc[i] += cfg.interaction_strength * gain * min(1.0 / dist, cap) * d / dist
        pos = pos + vel * cfg.dt
        vel = vel + acc * cfg.dt
        pos[:, 2] = 0.0
        vel[:, 2] = 0.0
    return truth, None


def _mpl_sensors(cfg, rng):
    ang = 2 * np.pi * (np.arange(cfg.n_views) + rng.uniform(-0.2, 0.2, cfg.n_views)) / cfg.n_views
    rad = rng.uniform(10.0, 14.0, cfg.n_views)
    return np.stack([rad * np.cos(ang), rad * np.sin(ang), np.full(cfg.n_views, 3.0)], axis=1)


# -- cad ---------------------------------------------------------------------

_LANE = 2.0
_CROSSWALK = 8.0


def _rot(k: int) -> np.ndarray:
    c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][k % 4]
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _vehicle_path(approach: int, turn: str, start_dist: float) -> np.ndarray:
    """Waypoints for a vehicle entering from the west (rotated by ``approach`` quarter turns)."""
    pts = [np.array([-start_dist, -_LANE, 0.0]), np.array([-_LANE - 4.0, -_LANE, 0.0])]
    if turn == "straight":
        pts.append(np.array([60.0, -_LANE, 0.0]))
    else:
        # quarter circle from heading east to heading south (right) or north (left)
        sign = -1.0 if turn == "right" else 1.0
        radius = 4.0 if turn == "right" else 8.0
        cx, cy = -_LANE - 4.0, -_LANE + sign * radius
        for a in np.linspace(0, np.pi / 2, 7)[1:]:
            pts.append(np.array([cx + radius * np.sin(a), cy - sign * radius * np.cos(a), 0.0]))
        end = pts[-1]
        pts.append(end + np.array([0.0, sign * 60.0, 0.0]))
    rot = _rot(approach)
    return np.array([rot @ p for p in pts])


class _PathFollower:
    def __init__(self, waypoints: np.ndarray):
        self.pts = waypoints
        seg = np.diff(waypoints, axis=0)
        self.len = np.linalg.norm(seg, axis=1)
        self.dir = seg / self.len[:, None]
        self.cum = np.concatenate([[0.0], np.cumsum(self.len)])

    def at(self, s: float):
        k = int(np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.len) - 1))
        return self.pts[k] + (s - self.cum[k]) * self.dir[k], self.dir[k]


def _simulate_cad(cfg: ScenarioConfig, rng: np.random.Generator):
    n = cfg.n_objects
    kinds = ["vehicle"] + (["pedestrian"] if n > 1 else []) + ["vehicle"] * max(0, n - 2)
    followers, arc, speed, cruise, brake = {}, {}, {}, {}, {}
    ped_pos = ped_vel = None
    for i, kind in enumerate(kinds):
        if kind == "pedestrian":
            side = 1.0 if rng.random() < 0.5 else -1.0
            x = -_CROSSWALK + rng.uniform(-1.0, 1.0)
            ped_pos = np.array([x, -_LANE + side * rng.uniform(2.5, 4.5), 0.0])
            ped_vel = np.array([0.0, -side * rng.uniform(1.2, 1.8), 0.0])
            continue
        approach = 0 if i == 0 else (i - 1) % 3 + 1
        if i == 0:
            start = _CROSSWALK + rng.uniform(3.5, 6.5)
            turn = "straight"
        else:
            start = rng.uniform(12.0, 25.0)
            turn = ("straight", "left", "right")[int(rng.random() * 3)]
        followers[i] = _PathFollower(_vehicle_path(approach, turn, start))
        arc[i] = 0.0
        cruise[i] = rng.uniform(7.0, 10.0)
        speed[i] = cruise[i]
        brake[i] = 0.0

    lookahead, clearance, margin, jerk = 4.0, 2.0, 1.5, 60.0
    truth = np.empty((cfg.n_frames, n, 3))
    min_ratio = 1.0
    for t in range(cfg.n_frames):
        for i in range(n):
            truth[t, i] = ped_pos if kinds[i] == "pedestrian" else followers[i].at(arc[i])[0]
        for i, f in followers.items():
            p, h = f.at(arc[i])
            target = 0.0
            if ped_pos is not None and cfg.interaction_strength > 0:
                taus = np.linspace(0.0, lookahead, 41)
                q = ped_pos + taus[:, None] * ped_vel - p
                along = q @ h
                across = np.abs(q[:, 0] * h[1] - q[:, 1] * h[0])
                hit = (across < clearance) & (along > 0.0) & (along < speed[i] * lookahead + 5.0)
                if hit.any():
                    d = max(float(along[hit].min()) - margin, 0.3)
                    target = float(np.clip(speed[i] ** 2 / (2 * d), 5.0, 9.0))
            brake[i] += float(np.clip(target - brake[i], -jerk * cfg.dt, jerk * cfg.dt))
            if target == 0.0:
                brake[i] = 0.0
                speed[i] = min(cruise[i], speed[i] + 2.0 * cfg.dt)
            else:
                speed[i] = max(0.0, speed[i] - brake[i] * cfg.dt)
            arc[i] += speed[i] * cfg.dt
        if ped_pos is not None:
            ped_pos = ped_pos + ped_vel * cfg.dt
        # speed recorded for frame t+1; only frames inside the window count
        if t + 1 < cfg.n_frames and followers:
            min_ratio = min(min_ratio, min(speed[i] / cruise[i] for i in followers))
    coupled = ped_pos is not None and bool(followers)
    return truth, (min_ratio if coupled else None)


def _cad_sensors(cfg, rng):
    base = 2 * np.pi * np.arange(cfg.n_views) / max(cfg.n_views, 4) + np.pi / 4
    ang = base + rng.uniform(-0.15, 0.15, cfg.n_views)
    rad = rng.uniform(14.0, 18.0, cfg.n_views)
    return np.stack([rad * np.cos(ang), rad * np.sin(ang), np.full(cfg.n_views, 1.5)], axis=1)


# -- generation --------------------------------------------------------------

def _generate_one(cfg: ScenarioConfig, instance_id: int) -> DataInstance:
    for attempt in range(MAX_ATTEMPTS):
        rng = _rng(cfg.seed, instance_id, attempt)
        if cfg.kind == "cad":
            truth, min_ratio = _simulate_cad(cfg, rng)
            if cfg.interaction_strength > 0 and min_ratio is not None and min_ratio >= 0.5:
                continue
            sensors = _cad_sensors(cfg, rng)
        else:
            truth, _ = _simulate_mpl(cfg, rng)
            sensors = _mpl_sensors(cfg, rng)
        break
    else:
        raise InvalidConfig(f"interaction never fired in {MAX_ATTEMPTS} attempts")

    v, f, n = cfg.n_views, cfg.n_frames, cfg.n_objects
    sigma = np.array(cfg.noise_sigma_per_view, dtype=float)
    bias = cfg.view_bias_sigma * _normals(rng, (v, 3))
    noise = _normals(rng, (v, f, n, 3)) * sigma[:, None, None, None]
    z = truth[None] + bias[:, None, None, :] + noise
    var = np.maximum(cfg.misreport_r * sigma ** 2, MIN_VARIANCE)
    r = np.broadcast_to(var[:, None, None, None, None] * np.eye(3), (v, f, n, 3, 3)).copy()
    if cfg.drop_prob > 0:
        drop = rng.random((v, f, n)) < cfg.drop_prob
        drop[:, :2] = False  # filters seed their histories from the first two frames
        z[drop] = np.nan
        r[drop] = np.nan
    return DataInstance(instance_id, cfg, sensors, truth, sigma, bias, z, r, retries=attempt)


def generate(config: ScenarioConfig, n_instances: int) -> list[DataInstance]:
    config.validate()
    if n_instances < 0:
        raise InvalidConfig("n_instances must be nonnegative")
    return [_generate_one(config, i) for i in range(n_instances)]


# -- persistence -------------------------------------------------------------

def _instance_record(inst: DataInstance) -> dict:
    views = []
    for v in range(inst.n_views):
        frames = []
        for t in range(inst.n_frames):
            objs = [
                {"id": i, "z": inst.z[v, t, i].tolist(), "r": inst.r[v, t, i].ravel().tolist()}
                for i in range(inst.n_objects)
                if not np.isnan(inst.z[v, t, i, 0])
            ]
            frames.append({"t": t, "objects": objs})
        views.append(
            {
                "view_id": v,
                "noise_sigma": float(inst.noise_sigma[v]),
                "bias": inst.bias[v].tolist(),
                "frames": frames,
            }
        )
    return {
        "instance_id": inst.instance_id,
        "retries": inst.retries,
        "sensors": inst.sensors.tolist(),
        "truth": inst.truth.tolist(),
        "views": views,
    }


def _parse_instance(rec: dict, cfg: ScenarioConfig) -> DataInstance:
    truth = np.array(rec["truth"], dtype=float)
    f, n = truth.shape[0], truth.shape[1]
    if truth.shape != (f, n, 3):
        raise ValueError(f"truth has shape {truth.shape}")
    views = rec["views"]
    v = len(views)
    z = np.full((v, f, n, 3), np.nan)
    r = np.full((v, f, n, 3, 3), np.nan)
    for k, view in enumerate(views):
        if view["view_id"] != k:
            raise ValueError(f"view {k} has view_id {view['view_id']}")
        if len(view["frames"]) != f:
            raise ValueError(f"view {k} has {len(view['frames'])} frames, truth has {f}")
        for frame in view["frames"]:
            t = frame["t"]
            for obj in frame["objects"]:
                z[k, t, obj["id"]] = obj["z"]
                r[k, t, obj["id"]] = np.array(obj["r"], dtype=float).reshape(3, 3)
    return DataInstance(
        instance_id=int(rec["instance_id"]),
        config=cfg,
        sensors=np.array(rec["sensors"], dtype=float).reshape(v, 3),
        truth=truth,
        noise_sigma=np.array([view["noise_sigma"] for view in views], dtype=float),
        bias=np.array([view["bias"] for view in views], dtype=float).reshape(v, 3),
        z=z,
        r=r,
        retries=int(rec.get("retries", 0)),
    )


def dumps_dataset(instances: list[DataInstance], config: ScenarioConfig) -> str:
    header = {"format_version": FORMAT_VERSION, "kind": config.kind, "config": config.to_dict()}
    lines = [json.dumps(header, sort_keys=True, allow_nan=False)]
    lines += [json.dumps(_instance_record(i), sort_keys=True, allow_nan=False) for i in instances]
    return "\n".join(lines) + "\n"


def write_dataset(instances: list[DataInstance], path, config: ScenarioConfig | None = None) -> None:
    if config is None:
        if not instances:
            raise ValueError("an empty dataset needs an explicit config for its header")
        config = instances[0].config
    Path(path).write_text(dumps_dataset(instances, config))


def read_dataset(path) -> list[DataInstance]:
    return read_dataset_with_config(path)[0]


def read_dataset_with_config(path) -> tuple[list[DataInstance], ScenarioConfig]:
    text = Path(path).read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise SchemaError(1, "missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(1, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(header, dict) or "format_version" not in header:
        raise SchemaError(1, "header lacks format_version")
    if header["format_version"] != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"dataset format_version {header['format_version']}, expected {FORMAT_VERSION}"
        )
    try:
        cfg = ScenarioConfig.from_dict(header["config"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(1, f"bad config: {exc}") from exc
    instances = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            instances.append(_parse_instance(rec, cfg))
        except json.JSONDecodeError as exc:
            raise SchemaError(lineno, f"invalid JSON: {exc.msg}") from exc
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise SchemaError(lineno, f"bad instance record: {exc!r}") from exc
    return instances, cfg
