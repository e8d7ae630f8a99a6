"""Run configuration: INI files plus CLI overrides, strictly validated.

A run file has sections [encoder], [decoder], [train], [render], [paths]
and [run]; every key must correspond to a known field, and values are
coerced to the field's type.  Unknown sections or keys are rejected rather
than ignored so typos cannot silently fall back to defaults.  The resolved
configuration can be rendered back to INI text for logging.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .model import NetworkConfig
from .training import TrainConfig

__all__ = ["RenderSettings", "PathSettings", "RunConfig", "load_run_config",
           "apply_overrides", "format_resolved", "env_seed", "env_threads"]

_TRUE = ("true", "1", "yes", "on")
_FALSE = ("false", "0", "no", "off")


@dataclass
class RenderSettings:
    objects: int = 10
    q: int = 8
    res: int = 128
    lighting: str = "random"
    png16: bool = False
    workers: int = 1


@dataclass
class PathSettings:
    data: str = ""
    test: str = ""
    out: str = ""
    ckpt: str = ""


@dataclass
class RunSettings:
    seed: int = 0


@dataclass
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    render: RenderSettings = field(default_factory=RenderSettings)
    paths: PathSettings = field(default_factory=PathSettings)
    run: RunSettings = field(default_factory=RunSettings)
    explicit: set = field(default_factory=set)

    @property
    def seed(self) -> int:
        return self.run.seed

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(encoder=self.encoder, decoder=self.decoder,
                             init_seed=self.run.seed)

    def train_config(self) -> TrainConfig:
        train = dataclasses.replace(self.train)
        if "train.seed" not in self.explicit:
            train.seed = self.run.seed
        return train


_SECTIONS = {
    "encoder": "encoder",
    "decoder": "decoder",
    "train": "train",
    "render": "render",
    "paths": "paths",
    "run": "run",
}


def _coerce(section: str, key: str, text: str, default):
    if isinstance(default, bool):
        lowered = text.strip().lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"[{section}] {key}: expected a boolean, "
                          f"got '{text}'")
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse '{text}' as "
                          f"{type(default).__name__}") from None
    return text


def _set_key(config: RunConfig, section: str, key: str, text: str) -> None:
    if section not in _SECTIONS:
        raise ConfigError(f"unknown config section [{section}]; expected one "
                          f"of {sorted(_SECTIONS)}")
    target = getattr(config, _SECTIONS[section])
    names = {f.name for f in fields(target)}
    if key not in names:
        raise ConfigError(f"unknown key '{key}' in [{section}]; expected one "
                          f"of {sorted(names)}")
    value = _coerce(section, key, text, getattr(target, key))
    setattr(target, key, value)
    config.explicit.add(f"{section}.{key}")


def _revalidate(config: RunConfig) -> None:
    # dataclass __post_init__ checks re-applied after field pokes
    config.encoder.__post_init__()
    config.decoder.__post_init__()
    config.train.__post_init__()


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, overlaid with an INI file, overlaid with CLI overrides.

    ``overrides`` maps dotted keys (e.g. ``"train.lr"``) to string or typed
    values; they win over the file, which wins over defaults.
    """
    config = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(Path(path))
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            for key, text in parser.items(section):
                _set_key(config, section, key, text)
    if overrides:
        apply_overrides(config, overrides)
    _revalidate(config)
    return config


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Apply dotted-key overrides; values may be strings or already typed."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        if "." not in dotted:
            raise ConfigError(f"override key '{dotted}' must look like "
                              "'section.key'")
        section, key = dotted.split(".", 1)
        _set_key(config, section, key, str(value))
    _revalidate(config)
    return config


def format_resolved(config: RunConfig) -> str:
    """Full configuration as INI text (every key, resolved values)."""
    parser = configparser.ConfigParser()
    for section, attr in _SECTIONS.items():
        target = getattr(config, attr)
        parser[section] = {f.name: str(getattr(target, f.name))
                           for f in fields(target)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def env_seed(default: int = 0) -> int:
    """Global fallback seed from UNIPS_SEED (flags and files take precedence)."""
    text = os.environ.get("UNIPS_SEED", "")
    if not text:
        return default
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"UNIPS_SEED must be an integer, got '{text}'") from None


def env_threads(default: int = 1) -> int:
    """Worker count from UNIPS_THREADS."""
    text = os.environ.get("UNIPS_THREADS", "")
    if not text:
        return default
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(
            f"UNIPS_THREADS must be an integer, got '{text}'") from None
    if value < 1:
        raise ConfigError("UNIPS_THREADS must be >= 1")
    return value
