"""Key-value configuration file (INI syntax) shared by every command.

Sections map onto dataclasses::

    [array]    ArrayConfig
    [ga]       GaParams
    [cost]     CostWeights
    [train]    TrainConfig
    [sampler]  SamplerRanges   (ranges written as ``lo, hi``)
    [link]     LinkSettings

Unknown sections or keys are rejected so typos do not pass silently.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .array_model import ArrayConfig
from .ga import GaParams, SamplerRanges
from .ml.nn import TrainConfig
from .objective import CostWeights

CONFIG_DIR_ENV = "SATBEAM_CONFIG_DIR"
DEFAULT_NAME = "satbeam.ini"


@dataclass
class LinkSettings:
    excess_loss_db: float = 3.0
    g_rx_max_dbi: float = 30.0
    rx_noise_temp_k: float = 300.0
    bandwidth_hz: float = 500e6
    spectral_table: str = ""  # optional gamma_db,kappa CSV

    def __post_init__(self):
        if self.excess_loss_db < 0 or self.bandwidth_hz <= 0 or self.rx_noise_temp_k <= 0:
            raise ValueError("link settings: loss >= 0, bandwidth > 0 and temperature > 0 required")


@dataclass
class Settings:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    ga: GaParams = field(default_factory=GaParams)
    cost: CostWeights = field(default_factory=CostWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerRanges = field(default_factory=SamplerRanges)
    link: LinkSettings = field(default_factory=LinkSettings)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; equal settings give equal digests."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


_SECTIONS = {
    "array": ArrayConfig,
    "ga": GaParams,
    "cost": CostWeights,
    "train": TrainConfig,
    "sampler": SamplerRanges,
    "link": LinkSettings,
}


def _convert(raw: str, default, name: str):
    raw = raw.strip()
    if isinstance(default, tuple):
        parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
        kind = type(default[0]) if default else float
        return tuple(kind(float(p)) if kind is int else kind(p) for p in parts)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or default is None:
        if default is None and raw.lower() in ("", "none"):
            return None
        return float(raw)
    return raw


def _build(cls, items: dict, section: str):
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in items.items():
        if key not in known:
            raise ValueError(f"[{section}] unknown key {key!r}")
        try:
            kwargs[key] = _convert(raw, getattr(defaults, key), key)
        except ValueError as exc:
            raise ValueError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    return cls(**kwargs)


def default_config_path() -> Path | None:
    d = os.environ.get(CONFIG_DIR_ENV)
    if d:
        p = Path(d) / DEFAULT_NAME
        if p.exists():
            return p
    return None


def load_settings(path=None) -> Settings:
    """Settings from ``path``, else ``$SATBEAM_CONFIG_DIR/satbeam.ini``, else defaults."""
    if path is None:
        path = default_config_path()
        if path is None:
            return Settings()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh)
    unknown = set(parser.sections()) - set(_SECTIONS)
    if unknown:
        raise ValueError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    parts = {name: _build(cls, dict(parser[name]) if parser.has_section(name) else {}, name)
             for name, cls in _SECTIONS.items()}
    return Settings(**parts)


def dump_settings(settings: Settings, path) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for name, values in settings.to_dict().items():
        parser[name] = {k: _fmt(v) for k, v in values.items()}
    with open(path, "w") as fh:
        parser.write(fh)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)
