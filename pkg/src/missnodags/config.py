"""Line-oriented experiment configuration.

A config file holds ``section.key = value`` lines; ``#`` starts a comment and
blank lines are ignored. Example::

    data.d = 10
    data.density = 1
    missing.rates = 0.1, 0.3, 0.5
    train.epochs = 100
    sweep.methods = missnodags, mean_impute_then_learn, clean
    sweep.seeds = 10

Unknown keys are rejected with a :class:`ConfigError` naming the key.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .likelihood import LogDetConfig
from .trainer import METHODS, TrainConfig


class ConfigError(ValueError):
    """Malformed config file or invalid value."""


@dataclass
class DataConfig:
    d: int = 10
    density: float = 1.0
    sem: str = "linear"
    sigma: float = 0.25
    lipschitz: float = 0.9
    weight_low: float = 0.25
    weight_high: float = 0.6
    n_per_intervention: int = 100
    n_test_per_intervention: int = 10


@dataclass
class MissingConfig:
    rates: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    rate: float | None = None

    @property
    def generate_rate(self) -> float:
        """Rate used by single-dataset generation (``rate`` or the first of ``rates``)."""
        return self.rates[0] if self.rate is None else self.rate


@dataclass
class SweepConfig:
    methods: list = field(default_factory=lambda: ["missnodags", "mean_impute_then_learn", "clean"])
    seeds: int = 10
    jobs: int = 1


@dataclass
class IoConfig:
    out_dir: str = ""


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    missing: MissingConfig = field(default_factory=MissingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def validate(self) -> "ExperimentConfig":
        if not self.missing.rates:
            raise ConfigError("missing.rates must be non-empty")
        for r in list(self.missing.rates) + [self.missing.generate_rate]:
            if not 0.0 <= r < 1.0:
                raise ConfigError(f"missing rate {r} outside [0, 1)")
        if not self.sweep.methods:
            raise ConfigError("sweep.methods must be non-empty")
        for m in self.sweep.methods:
            if m not in METHODS:
                raise ConfigError(f"sweep.methods: unknown method {m!r}")
        if self.sweep.seeds < 1 or self.sweep.jobs < 1:
            raise ConfigError("sweep.seeds and sweep.jobs must be positive")
        if self.data.sem not in ("linear", "tanh"):
            raise ConfigError(f"data.sem must be linear or tanh, got {self.data.sem!r}")
        if self.data.d < 2 or self.data.n_per_intervention < 1:
            raise ConfigError("data.d must be >= 2 and data.n_per_intervention >= 1")
        if not 0 < self.data.weight_low < self.data.weight_high:
            raise ConfigError("need 0 < data.weight_low < data.weight_high")
        return self


# Log-det settings are flattened into the train section.
_LOGDET_KEYS = {"logdet_mode": "mode", "poisson_mean": "poisson_mean",
                "probes": "probes", "truncation": "truncation"}


def _coerce(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            if raw.lower() in ("none", ""):
                return None
            return float(raw)
        if isinstance(default, list):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], float):
                return [float(s) for s in items]
            return items
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse config text into an :class:`ExperimentConfig`."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        lhs, rhs = (s.strip() for s in line.split("=", 1))
        if "." not in lhs:
            raise ConfigError(f"line {lineno}: key {lhs!r} lacks a section")
        section, key = lhs.split(".", 1)
        sections.setdefault(section, {})[key] = (rhs, lineno)

    cfg = ExperimentConfig()
    train_kw: dict = {}
    logdet_kw: dict = {}
    for section, entries in sections.items():
        if section == "train":
            names = {f.name for f in dataclasses.fields(TrainConfig)} - {"logdet"}
            for key, (raw, _) in entries.items():
                if key in _LOGDET_KEYS:
                    attr = _LOGDET_KEYS[key]
                    logdet_kw[attr] = _coerce(raw, getattr(LogDetConfig(), attr), f"train.{key}")
                elif key in names:
                    default = getattr(cfg.train, key)
                    if key == "hidden":
                        default = 0 if raw.lower() not in ("none", "") else None
                    train_kw[key] = _coerce(raw, default, f"train.{key}")
                else:
                    raise ConfigError(f"unknown config key train.{key}")
            continue
        target = getattr(cfg, section, None) if section != "train" else None
        if target is None or not dataclasses.is_dataclass(target):
            raise ConfigError(f"unknown config section {section!r}")
        names = {f.name for f in dataclasses.fields(target)}
        for key, (raw, _) in entries.items():
            if key not in names:
                raise ConfigError(f"unknown config key {section}.{key}")
            setattr(target, key, _coerce(raw, getattr(target, key), f"{section}.{key}"))
    try:
        if logdet_kw:
            train_kw["logdet"] = LogDetConfig(**logdet_kw)
        cfg.train = TrainConfig(**train_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def format_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config_text` (up to comments and ordering)."""
    lines = []
    for section in ("data", "missing", "sweep", "io"):
        for f in dataclasses.fields(getattr(cfg, section)):
            value = getattr(getattr(cfg, section), f.name)
            if value is None:
                continue
            if isinstance(value, list):
                value = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            lines.append(f"{section}.{f.name} = {value}")
    for f in dataclasses.fields(TrainConfig):
        if f.name == "logdet":
            continue
        value = getattr(cfg.train, f.name)
        if value is not None:
            lines.append(f"train.{f.name} = {value!r}" if isinstance(value, float)
                         else f"train.{f.name} = {value}")
    for key, attr in _LOGDET_KEYS.items():
        lines.append(f"train.{key} = {getattr(cfg.train.logdet, attr)}")
    return "\n".join(lines) + "\n"
