"""Experiment configuration files (YAML) with line-precise validation.

A config looks like::

    kind: gaf-mean
    master_seed: 7
    worker_count: 1
    output_dir: runs/mean
    strict: false
    params:
      r: 4
      M: 500

Unknown keys are rejected.  Missing optional parameters are filled from the
per-kind defaults below; ``REQUIRED`` marks parameters without a default.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import copy

import yaml

from .errors import ConfigError

REQUIRED = object()

UNIT_BUMP = [{"p": 3, "center": [0.0, 0.0], "scale": 1.0}]
# both supports reach radius 1.25, the most the r = 12 window allows; the O(1/r^2)
# finite-size correction grows like 1/scale^2, so neither bump is made small
VARIANCE_PAIR = [
    {"p": 3, "center": [0.0, 0.0], "scale": 1.25},
    {"p": 3, "center": [0.1875, 0.0], "scale": 1.0625},
]

GAUSSIAN = {"kind": "gaussian", "sigma": 1.0}

SCHEMA = {
    "md-chain": {
        "base": GAUSSIAN, "budget": {"kind": "constant", "C": 0.0}, "depth": 3, "samples": 100_000,
        "noise_factor": 1.0, "strict_budget": True, "lambda_max": 0.5, "n_lambda": 20,
        "limit_levels": [3, 4, 5, 6, 7, 8], "delta": 0.5,
    },
    "sandwich": {
        "base": GAUSSIAN, "budget": {"kind": "geometric", "M": 1.0, "theta": 0.25}, "depth": 4,
        "samples": 100_000, "noise_factor": 1.0, "strict_budget": True, "lambda_max": 0.05, "n_lambda": 20,
        "control_noise_factor": 10.0,
    },
    "inequalities": {"instances": 500, "M": 100_000, "th31_M": 20_000, "th31_T": 4.0},
    "splittable-1d": {"T": 2.0, "h": 0.0625, "M": 10_000},
    "splittable-2d": {"T": 2.0, "h": 0.25, "M": 5000, "alpha": None, "alphas_extra": []},
    "gaf-mean": {"r": REQUIRED, "M": REQUIRED, "functions": UNIT_BUMP},
    "gaf-variance": {"r_list": REQUIRED, "M": REQUIRED, "functions": VARIANCE_PAIR},
    "gaf-clt": {"r": REQUIRED, "M": REQUIRED, "functions": UNIT_BUMP, "bootstrap": 200},
    "gaf-cgf": {"r_list": REQUIRED, "M": REQUIRED, "functions": UNIT_BUMP,
                "lambdas": [-0.02, -0.01, -0.005, 0.005, 0.01, 0.02]},
    "certificates": {"step": 0.25, "K_lattice": 32, "alpha_tolerance": 1e-3},
}

TOP = {"kind": REQUIRED, "master_seed": REQUIRED, "worker_count": 1, "output_dir": None, "strict": False,
       "params": {}}

NUMERIC = {"M", "samples", "depth", "instances", "th31_M", "n_lambda", "K_lattice", "bootstrap",
           "r", "T", "h", "th31_T", "lambda_max", "delta", "noise_factor", "step", "alpha_tolerance",
           "control_noise_factor"}
INTEGER = {"M", "samples", "depth", "instances", "th31_M", "n_lambda", "K_lattice", "bootstrap"}


@dataclass
class ExperimentConfig:
    kind: str
    master_seed: int
    worker_count: int = 1
    output_dir: str | None = None
    strict: bool = False
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "master_seed": self.master_seed, "worker_count": self.worker_count,
                "output_dir": self.output_dir, "strict": self.strict, "params": copy.deepcopy(self.params)}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def with_overrides(self, seed=None, workers=None, out=None, strict=None) -> "ExperimentConfig":
        d = self.to_dict()
        if seed is not None:
            d["master_seed"] = int(seed)
        if workers is not None:
            d["worker_count"] = int(workers)
        if out is not None:
            d["output_dir"] = str(out)
        if strict:
            d["strict"] = True
        return ExperimentConfig(**d)


def _lines(node, prefix=()):
    """Map key paths to 1-based source lines."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            out[path] = k.start_mark.line + 1
            out.update(_lines(v, path))
    return out


def _check_number(name, value, line, integer):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}", line)
    if integer and int(value) != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}", line)
    if name in ("M", "samples", "instances", "th31_M") and value <= 0:
        raise ConfigError(f"{name} must be positive", line)


def validate(data, lines=None) -> ExperimentConfig:
    lines = lines or {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1)
    for k in data:
        if k not in TOP:
            raise ConfigError(f"unknown key {k!r}", lines.get((k,)))
    for k, d in TOP.items():
        if d is REQUIRED and k not in data:
            raise ConfigError(f"missing required field {k!r}", 1)
    kind = data["kind"]
    if kind not in SCHEMA:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {sorted(SCHEMA)}", lines.get(("kind",)))
    seed = data["master_seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("master_seed must be a non-negative integer", lines.get(("master_seed",)))
    wc = data.get("worker_count", 1)
    if isinstance(wc, bool) or not isinstance(wc, int) or wc < 1:
        raise ConfigError("worker_count must be a positive integer", lines.get(("worker_count",)))
    params = data.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("params must be a mapping", lines.get(("params",)))
    schema = SCHEMA[kind]
    full = {}
    for k, v in params.items():
        if k not in schema:
            raise ConfigError(f"unknown parameter {k!r} for kind {kind}", lines.get(("params", k)))
        if k in NUMERIC:
            _check_number(k, v, lines.get(("params", k)), k in INTEGER)
        if k in ("r_list", "limit_levels", "lambdas", "alphas_extra"):
            if not isinstance(v, list) or not all(isinstance(x, (int, float)) for x in v):
                raise ConfigError(f"{k} must be a list of numbers", lines.get(("params", k)))
        full[k] = v
    for k, d in schema.items():
        if k not in full:
            if d is REQUIRED:
                raise ConfigError(f"missing required field 'params.{k}'", lines.get(("params",), 1))
            full[k] = copy.deepcopy(d)
    out = data.get("output_dir")
    return ExperimentConfig(kind, seed, wc, None if out is None else str(out), bool(data.get("strict", False)), full)


def loads(text: str) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", mark.line + 1 if mark else None) from e
    return validate(data, _lines(node))


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        return loads(fh.read())
