"""Named parameter tensors of the spatiotemporal graph network and their JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
HIDDEN = 32
GAT1_OUT = 16


class ModelFormatError(ValueError):
    pass


def param_shapes(hidden: int = HIDDEN, gat1_out: int = GAT1_OUT) -> dict[str, tuple[int, ...]]:
    g = 4 * hidden
    return {
        "enc.w_ih": (3, g),
        "enc.w_hh": (hidden, g),
        "enc.b": (g,),
        "gat1.w": (hidden, gat1_out),
        "gat1.a": (2 * gat1_out,),
        "gat2.w": (gat1_out, hidden),
        "gat2.a": (2 * hidden,),
        "dec.init": (2 * hidden, hidden),
        "dec.w_ih": (3, g),
        "dec.w_hh": (hidden, g),
        "dec.b": (g,),
        "out.w": (hidden, 3),
        "out.b": (3,),
    }


PARAM_NAMES = tuple(param_shapes())


@dataclass
class ModelParams:
    tensors: dict[str, np.ndarray]
    seed: int = 0
    hidden_dim: int = HIDDEN

    def __post_init__(self):
        self.tensors = dict(self.tensors)
        shapes = param_shapes(self.hidden_dim)
        if set(self.tensors) != set(shapes):
            raise ModelFormatError(f"expected tensors {sorted(shapes)}, got {sorted(self.tensors)}")
        for name, shape in shapes.items():
            t = np.asarray(self.tensors[name], dtype=float)
            if t.shape != shape:
                raise ModelFormatError(f"{name}: shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)):
                raise ModelFormatError(f"{name}: non-finite entries")
            self.tensors[name] = t

    def __getitem__(self, name):
        return self.tensors[name]

    @classmethod
    def initialize(cls, seed: int, hidden_dim: int = HIDDEN, scale: float = 0.1) -> "ModelParams":
        rng = np.random.Generator(np.random.PCG64(seed))
        tensors = {
            name: rng.uniform(-scale, scale, size=shape)
            for name, shape in param_shapes(hidden_dim).items()
        }
        return cls(tensors, seed=seed, hidden_dim=hidden_dim)

    @classmethod
    def zeros(cls, hidden_dim: int = HIDDEN) -> "ModelParams":
        return cls({n: np.zeros(s) for n, s in param_shapes(hidden_dim).items()}, hidden_dim=hidden_dim)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()}, self.seed, self.hidden_dim)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[n].ravel() for n in PARAM_NAMES])

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "hidden_dim": self.hidden_dim,
            "seed": self.seed,
            "tensors": {
                name: {"shape": list(t.shape), "data": t.ravel().tolist()}
                for name, t in self.tensors.items()
            },
        }
        return json.dumps(doc, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"malformed model file: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported format_version {doc.get('format_version') if isinstance(doc, dict) else None!r}")
        try:
            tensors = {
                name: np.array(entry["data"], dtype=float).reshape(entry["shape"])
                for name, entry in doc["tensors"].items()
            }
            return cls(tensors, seed=int(doc["seed"]), hidden_dim=int(doc["hidden_dim"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"bad model file: {exc}") from exc


def save_params(params: ModelParams, path) -> None:
    Path(path).write_text(params.to_json())


def load_params(path) -> ModelParams:
    return ModelParams.from_json(Path(path).read_text())
