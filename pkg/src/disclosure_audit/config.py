"""Pipeline configuration.

The config file is flat ``key = value`` text (``#`` comments allowed)::

    omega = -0.1
    n_samples = 1000
    scorer = perturbed

Command-line flags override file values.
"""

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError

_SECTION = "pipeline"


@dataclass(frozen=True)
class PipelineConfig:
    omega: float = -0.1
    positive_lexicon: Optional[str] = None
    negative_lexicon: Optional[str] = None
    complexity_lexicon: Optional[str] = None
    hedging_lexicon: Optional[str] = None
    covenant_keywords: Optional[str] = None
    n_samples: int = 1000
    seed: int = 0
    theta: float = 1.0
    depth_cap: int = 3
    window_days: int = 5
    journal: Optional[str] = None
    scorer: str = "lexicon"
    routing: str = "moments"
    workers: int = 1
    fsync: bool = False

    def __post_init__(self):
        if not self.omega < 0:
            raise ConfigError(f"omega must be negative, got {self.omega}")
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.depth_cap < 1:
            raise ConfigError("depth_cap must be >= 1")
        if self.window_days < 0:
            raise ConfigError("window_days must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.scorer not in ("lexicon", "perturbed"):
            raise ConfigError(f"unknown scorer {self.scorer!r}")
        if self.routing not in ("moments", "rolling"):
            raise ConfigError(f"unknown routing variant {self.routing!r}")
        for name in (
            "positive_lexicon",
            "negative_lexicon",
            "complexity_lexicon",
            "hedging_lexicon",
            "covenant_keywords",
        ):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name}: no such file {path}")

    def updated(self, **overrides) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dumps(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            lines.append(f"{key} = {'' if value is None else value}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    if kind == Optional[str]:
        return raw or None
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
    return raw


def parse_config_text(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for key, raw in parser.items(_SECTION):
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, **overrides) -> PipelineConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values = parse_config_text(text)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)
