"""JSON run configuration shared by every CLI command."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .model import TrainConfig
from .synth import SynthConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # synthetic data
    n_regions: int = 20
    t_len: int = 150
    n_communities: int = 2
    coupling_by_class: tuple[float, ...] = (0.6, 0.3)
    noise_std: float = 1.0
    n_per_class: int = 50
    # co-embedding model
    epochs: int = 300
    learning_rate: float = 1e-4
    weight_decay: float = 5e-4
    dropout: float = 0.5
    hidden_dim: int = 1024
    # plain GCN baseline
    baseline_hidden_dim: int = 512
    baseline_dropout: float = 0.3
    # evaluation
    k_folds: int = 10
    # blocked eFC
    block_size: int = 512
    memory_budget: int = 1 << 30
    threads: int = 1
    input_dir: str | None = None
    output_dir: str | None = None

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_regions=self.n_regions,
            t_len=self.t_len,
            n_communities=self.n_communities,
            coupling_by_class=self.coupling_by_class,
            noise_std=self.noise_std,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            dropout=self.dropout,
            hidden_dim=self.hidden_dim,
            seed=self.seed,
        )

    def baseline_config(self) -> TrainConfig:
        return replace(
            self.train_config(), model="gcn", hidden_dim=self.baseline_hidden_dim, dropout=self.baseline_dropout
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coupling_by_class"] = list(self.coupling_by_class)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_OPTIONAL_STR = {"input_dir", "output_dir"}


def _coerce(name: str, kind, value):
    if name == "coupling_by_class":
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"config key '{name}' must be a list of numbers", name)
        return tuple(float(v) for v in value)
    if name in _OPTIONAL_STR:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"config key '{name}' must be a string or null", name)
        return value
    if kind is int or kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key '{name}' must be an integer, got {value!r}", name)
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key '{name}' must be a number, got {value!r}", name)
    return float(value)


def config_from_dict(data: dict, base: RunConfig | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'", unknown[0])
    values = {k: _coerce(k, known[k].type, v) for k, v in data.items()}
    cfg = replace(base or RunConfig(), **values)
    try:
        cfg.synth_config()
        cfg.train_config()
        cfg.baseline_config()
    except ValueError as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    for key in ("n_per_class", "k_folds", "block_size", "memory_budget", "threads"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"config key '{key}' must be positive", key)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(data)
