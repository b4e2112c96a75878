"""Run configuration: JSON settings file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields

from .core import Params
from .errors import ConfigError

MAX_WORKERS_ENV = "GRAYSCOTT_MAX_WORKERS"


@dataclass(frozen=True)
class RunConfig:
    L: int = 64
    steps: int = 100
    plotgap: int = 10
    Du: float = 0.2
    Dv: float = 0.1
    F: float = 0.02
    k: float = 0.048
    dt: float = 1.0
    noise: float = 0.1
    seed: int = 42
    procs: object = "auto"  # "auto" or (px, py, pz)
    output: str = "gs-output"
    edge_skip: bool = False
    threads: int = 1
    max_workers: int | None = None

    def __post_init__(self):
        _check_int(self, "L", 3)
        _check_int(self, "steps", 1)
        _check_int(self, "plotgap", 1)
        _check_int(self, "threads", 1)
        if self.max_workers is not None:
            _check_int(self, "max_workers", 1)
        if self.procs != "auto":
            try:
                procs = tuple(int(p) for p in self.procs)
            except (TypeError, ValueError):
                raise ConfigError(f"procs: expected 'auto' or [px, py, pz], got {self.procs!r}") from None
            if len(procs) != 3 or min(procs) < 1:
                raise ConfigError(f"procs: expected three positive ints, got {self.procs!r}")
            for ax, p in zip("xyz", procs):
                if self.L % p:
                    raise ConfigError(f"procs: p{ax}={p} does not divide L={self.L}")
            object.__setattr__(self, "procs", procs)
        if not isinstance(self.edge_skip, bool):
            raise ConfigError(f"edge_skip: expected a boolean, got {self.edge_skip!r}")
        self.params()  # validates the physical parameters

    def params(self):
        try:
            return Params(Du=float(self.Du), Dv=float(self.Dv), F=float(self.F),
                          k=float(self.k), noise=float(self.noise), dt=float(self.dt),
                          seed=int(self.seed))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping):
        unknown = sorted(set(mapping) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**mapping)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        if d["procs"] != "auto":
            d["procs"] = list(d["procs"])
        return d


def _check_int(cfg, name, minimum):
    value = getattr(cfg, name)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name}: expected an integer >= {minimum}, got {value!r}")


def load_config(path):
    """Read a JSON settings file into a plain dict (unknown keys rejected)."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    unknown = sorted(set(data) - set(RunConfig.keys()))
    if unknown:
        raise ConfigError(f"config {path}: unknown keys: {', '.join(unknown)}")
    return data


def resolve_max_workers(flag=None, config_value=None, environ=None):
    """flag > environment > config file > host logical CPU count."""
    environ = os.environ if environ is None else environ
    if flag is not None:
        return int(flag)
    env = environ.get(MAX_WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{MAX_WORKERS_ENV}={env!r} is not an integer") from None
        if value < 1:
            raise ConfigError(f"{MAX_WORKERS_ENV} must be >= 1")
        return value
    if config_value is not None:
        return int(config_value)
    return os.cpu_count() or 1
