"""Experiment configuration: a single JSON document per run, schema-validated."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from .dists import DistError
from .process import ModelParams, ProcessError

ACTIONS = ("simulate", "stationary", "analytics", "tails", "verify")
SUITES = ("moments", "embedding", "additive", "stationary-tail", "regular-variation",
          "large-deviations")

_DIST = {"type": "object", "required": ["kind"], "properties": {"kind": {"type": "string"}}}
_PROB = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["xi", "eta", "eps"],
            "properties": {k: _DIST for k in ("xi", "eta", "eps", "x0", "xm1")},
        },
        "action": {"enum": list(ACTIONS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output_dir": {"type": "string"},
        "n_steps": {"type": "integer", "minimum": 0},
        "path_count": {"type": "integer", "minimum": 1},
        "tol": _PROB,
        "levels": {"type": "array", "items": _PROB, "minItems": 1},
        "mc_count": {"type": "integer", "minimum": 1},
        "rel_tol": {"type": "number", "exclusiveMinimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "target": {"enum": ["stationary", "path_endpoint"]},
        "suites": {"type": "array", "items": {"enum": list(SUITES)}, "minItems": 1},
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``diagnostic`` is JSON-serializable."""

    def __init__(self, message: str, path: list | None = None):
        super().__init__(message)
        self.diagnostic = {"error": "config", "message": message, "path": list(path or [])}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    action: str | None = None
    seed: int = 0
    output_dir: str = "out"
    n_steps: int = 20
    path_count: int = 10
    tol: float = 1e-6
    levels: tuple[float, ...] = (0.1, 0.01, 0.001)
    mc_count: int = 100_000
    rel_tol: float = 0.2
    threads: int = 1
    target: str = "stationary"
    suites: tuple[str, ...] = SUITES
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        validator = jsonschema.Draft202012Validator(SCHEMA)
        errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
        if errors:
            e = errors[0]
            raise ConfigError(e.message, list(e.absolute_path))
        try:
            model = ModelParams.from_dict(d["model"])
        except (DistError, ProcessError, TypeError) as exc:
            raise ConfigError(str(exc), ["model"]) from exc
        kw = {k: v for k, v in d.items() if k != "model"}
        for k in ("levels", "suites"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(model=model, raw=d, **kw)

    def to_dict(self) -> dict:
        d = {
            "model": self.model.to_dict(),
            "action": self.action,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "n_steps": self.n_steps,
            "path_count": self.path_count,
            "tol": self.tol,
            "levels": list(self.levels),
            "mc_count": self.mc_count,
            "rel_tol": self.rel_tol,
            "threads": self.threads,
            "target": self.target,
            "suites": list(self.suites),
        }
        if d["action"] is None:
            del d["action"]
        return d

    def digest(self) -> str:
        """Hash of the result-relevant fields (output location and threads excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("threads")
        return hashlib.sha256(canonical_json(d).encode()).hexdigest()

    def override(self, **kw) -> ExperimentConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(d)


def jsonable(obj):
    """Recursively convert to plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    return obj


def canonical_json(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n")
