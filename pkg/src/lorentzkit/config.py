"""Run configuration: flat ``key=value`` file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields

from .errors import ConfigurationError
from .fileio import parse_key_values


TASKS = ("train", "eval", "bench-norm", "export-embeddings", "gen-synthetic")


@dataclass
class RunConfig:
    task: str = "train"
    seed: int = None
    dataset: str = ""
    split: str = "test"
    checkpoint: str = ""
    preset: str = "mlp"
    head: str = "plfc"
    norm: str = "gyrolbn"
    curvature: float = -1.0
    hidden_dim: int = 32
    num_layers: int = 2
    image_channels: int = 1
    dropout_p: float = 0.0
    epochs: int = 50
    batch_size: int = 64
    lr: float = 0.05
    lorentz_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_drop_epochs: str = ""
    lr_drop_gamma: float = 0.1
    bn_momentum: float = 0.1
    track_running: bool = True
    depth: int = 2
    branching: int = 3
    dim: int = 16
    samples_per_leaf: int = 50
    noise: float = 0.1
    dataset_format: str = "binary"
    bench_batch: int = 256
    bench_dim: int = 64
    bench_reps: int = 20
    bench_warmup: int = 2
    figures: bool = True

    def validate(self):
        checks = [
            (self.task in TASKS, f"task must be one of {', '.join(TASKS)}"),
            (self.lr > 0 and self.lorentz_lr > 0, "learning rates must be positive"),
            (self.lr_drop_gamma > 0, "lr_drop_gamma must be positive"),
            (0.0 <= self.momentum < 1.0, "momentum must lie in [0, 1)"),
            (0.0 < self.bn_momentum <= 1.0, "bn_momentum must lie in (0, 1]"),
            (self.weight_decay >= 0, "weight_decay must be nonnegative"),
            (0.0 <= self.dropout_p < 1.0, "dropout_p must lie in [0, 1)"),
            (self.curvature < 0, "curvature must be negative"),
            (self.epochs >= 0 and self.batch_size >= 1, "epochs must be >= 0 and batch_size >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)
        self.drop_epochs()
        return self

    def drop_epochs(self):
        try:
            return tuple(int(e) for e in self.lr_drop_epochs.replace(",", " ").split())
        except ValueError as exc:
            raise ConfigurationError(f"lr_drop_epochs: {exc}") from None

    def require_seed(self):
        if self.seed is None:
            raise ConfigurationError("a seed is required (--seed or seed=... in the config)")
        return self.seed

    def to_text(self):
        return "".join(f"{f.name}={_format(getattr(self, f.name))}\n" for f in fields(self))

    def config_hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _format(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _field_type(f):
    return {"seed": int}.get(f.name) or type(f.default)


def _coerce(f, raw):
    kind = _field_type(f)
    raw = raw.strip()
    try:
        if f.name == "seed" and raw == "":
            return None
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return kind(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{f.name}: {exc}") from None


FIELDS = {f.name: f for f in fields(RunConfig)}


def apply_overrides(cfg: RunConfig, values: dict) -> RunConfig:
    unknown = sorted(set(values) - set(FIELDS))
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = dataclasses.replace(cfg, **{k: _coerce(FIELDS[k], str(v)) for k, v in values.items()})
    return cfg.validate()


def load_config(path=None, overrides=None) -> RunConfig:
    cfg = RunConfig()
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        cfg = apply_overrides(cfg, parse_key_values(text, path))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def parse_config_text(text) -> RunConfig:
    return apply_overrides(RunConfig(), parse_key_values(text))
