"""Experiment configuration: JSON file values, overridden by command-line flags."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .attacks.common import CONVERGED_HIGH, CONVERGED_LOW
from .errors import InvalidParameterError
from .puf import Topology, format_topology, parse_topology
from .rng import resolve_seed

METHODS = ("lr", "mlp", "cmaes", "hybrid")


@dataclass
class ExperimentConfig:
    stages: int = 64
    topology: Topology = (0, 0, 1)
    sigma_noise: float = 0.05
    seed: Optional[int] = None
    crps: int = 10_000
    test_crps: int = 10_000
    repeats: Optional[int] = None
    method: str = "lr"
    runs: int = 5
    trials: Optional[int] = None
    epochs: Optional[int] = None
    batch_size: Optional[int] = None
    learning_rate: Optional[float] = None
    max_iterations: Optional[int] = None
    beta: float = 0.06
    dataset: Optional[str] = None
    out: Optional[str] = None
    table: Optional[str] = None
    converged_high: float = CONVERGED_HIGH
    converged_low: float = CONVERGED_LOW
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.topology = parse_topology(self.topology)
        if int(self.stages) != self.stages or self.stages < 1:
            raise InvalidParameterError(f"stages must be a positive integer, got {self.stages}")
        if not self.sigma_noise >= 0:
            raise InvalidParameterError(f"sigma_noise must be non-negative, got {self.sigma_noise}")
        for name in ("crps", "test_crps", "runs"):
            if int(getattr(self, name)) < 1:
                raise InvalidParameterError(f"{name} must be positive")
        if self.repeats is not None and self.repeats < 0:
            raise InvalidParameterError("repeats must be non-negative")
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown attack method {self.method!r}; choose from {', '.join(METHODS)}")
        if not 0 < self.beta < 0.5:
            raise InvalidParameterError(f"beta must lie in (0, 0.5), got {self.beta}")
        self.seed = resolve_seed(self.seed)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["topology"] = format_topology(self.topology)
        return d


_KNOWN = {f.name for f in fields(ExperimentConfig)}


def load_config_file(path) -> dict:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise InvalidParameterError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidParameterError("config file must hold a JSON object")
    if "config" in data and isinstance(data["config"], dict):
        # a report document: re-run from its embedded configuration
        data = data["config"]
    unknown = set(data) - _KNOWN
    if unknown:
        raise InvalidParameterError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def resolve_config(file_values: Optional[dict] = None, **flags) -> ExperimentConfig:
    """File values first, then every flag that was actually given."""
    values = dict(file_values or {})
    values.update({k: v for k, v in flags.items() if v is not None})
    return ExperimentConfig(**values)
