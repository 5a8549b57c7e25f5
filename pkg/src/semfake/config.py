"""Pipeline configuration: ``key=value`` files, overrides and run manifests."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    """Invalid configuration key or value."""


def _parse_ints(text: str) -> tuple:
    text = text.strip()
    return tuple(int(x) for x in text.split(",") if x.strip()) if text else ()


def _parse_strs(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


@dataclass(frozen=True)
class PipelineConfig:
    # generation
    par_c: float = 0.25
    par_l: float = 1.0
    par_m: float = 0.75
    par_v: float = 4.0
    count_per_seed: int = 50
    attempt_factor: int = 50
    # privacy
    par_s: float = 0.1
    par_i: int = 0
    par_d: float = 0.1
    anonymity_k: int = 2
    num_alternates: int = 10
    alternates: tuple = ()
    deniability: bool = True
    geo_direction: str = "fake_seed"
    # model
    epsilon: float = 0.01
    distance: str = "hamming"
    order: str = "zeroth"
    period_boundaries: tuple = ()
    slots_per_day: int = 72
    split_slot: int = 72
    # clustering: fixed k, or selection over [k_min, k_max]
    k: Optional[int] = None
    k_min: int = 2
    k_max: int = 6
    restarts: int = 50
    # LBS scenario
    beta: float = 0.5
    num_fakes: tuple = (1, 5, 10)
    selections: int = 4
    exposures: int = 5
    methods: tuple = ("ours", "uniform_iid", "aggregate_iid", "rw_aggregate", "rw_user")
    # publishing statistics
    kl_floor: float = 0.1
    top_m: int = 50
    top_k: int = 3
    fake_corpora: int = 10
    # synthetic corpus
    synth_users: int = 20
    synth_locations: int = 60
    synth_length: int = 72
    synth_days: int = 2
    synth_roles: int = 3
    synth_noise: float = 0.05
    synth_extent: float = 100.0
    synth_spread: float = 2.0
    # RNG streams
    seed_synth: int = 0
    seed_cluster: int = 0
    seed_generate: int = 1
    seed_scenario: int = 2
    seed_stats: int = 3
    seed_anneal: int = 4

    def __post_init__(self):
        if self.distance not in ("hamming", "euclidean"):
            raise ConfigError(f"distance must be hamming or euclidean, got {self.distance!r}")
        if self.order not in ("zeroth", "first"):
            raise ConfigError(f"order must be zeroth or first, got {self.order!r}")
        if self.k is None and self.k_min > self.k_max:
            raise ConfigError("k_min exceeds k_max")
        if not 0 < self.beta <= 1:
            raise ConfigError("beta must be in (0, 1]")
        if self.kl_floor <= 0:
            raise ConfigError("kl_floor must be positive")
        for name in ("count_per_seed", "attempt_factor", "selections", "exposures", "fake_corpora", "top_k", "restarts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.alternates and self.num_alternates < (1 if self.deniability else 0):
            raise ConfigError("deniability needs num_alternates >= 1")

    _PARSERS = {
        "alternates": _parse_strs,
        "methods": _parse_strs,
        "period_boundaries": _parse_ints,
        "num_fakes": _parse_ints,
        "k": _parse_optional_int,
        "deniability": _parse_bool,
    }

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def _parse_value(cls, key: str, text: str):
        f = {f.name: f for f in fields(cls)}.get(key)
        if f is None:
            raise ConfigError(f"unknown config key {key!r}")
        parser = cls._PARSERS.get(key)
        if parser is None:
            parser = {"int": int, "float": float, "str": str.strip}[type(f.default).__name__]
        try:
            return parser(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None

    @classmethod
    def parse_lines(cls, lines, source: str = "<config>") -> dict:
        values = {}
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key=value")
            key, text = (s.strip() for s in line.split("=", 1))
            values[key] = cls._parse_value(key, text)
        return values

    @classmethod
    def load(cls, path=None, overrides: Optional[list[str]] = None) -> "PipelineConfig":
        values = {}
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"{p}: no such config file")
            values.update(cls.parse_lines(p.read_text().splitlines(), str(p)))
        values.update(cls.parse_lines(overrides or [], "--set"))
        return cls(**values)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: _jsonable(getattr(self, f.name)) for f in fields(self)}

    def dumps(self) -> str:
        """Canonical ``key=value`` text; loading it back gives an equal config."""
        out = []
        for key, value in sorted(self.as_dict().items()):
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif value is None:
                value = "none"
            out.append(f"{key}={value}")
        return "\n".join(out) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode()).hexdigest()


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, config: PipelineConfig, inputs=(), outputs=()) -> dict:
    """Record parameters, seeds and content hashes; no timestamps or absolute paths."""
    manifest = {
        "command": command,
        "config": config.as_dict(),
        "config_sha256": config.digest(),
        "inputs": {Path(p).name: file_sha256(p) for p in sorted(inputs, key=lambda p: Path(p).name)},
        "outputs": {Path(p).name: file_sha256(p) for p in sorted(outputs, key=lambda p: Path(p).name)},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
