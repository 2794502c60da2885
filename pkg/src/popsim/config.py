"""Run configuration: flat ``key = value`` text files.

Dates are ISO-8601; file paths are kept verbatim and resolved relative to
the config file's directory when the run is assembled, so a config directory
can be moved as a unit.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from datetime import date
from pathlib import Path

from .errors import InputError
from .scenario import read_key_values

_PATH_KEYS = ("params_death", "params_emigration", "params_birth",
              "params_internal_migration", "migration_tensor", "immigration",
              "initial_population", "reference_census")

IM_MODES = ("none", "full-regional")


@dataclass
class RunConfig:
    start: str = "2020-01-01"
    end: str = "2030-01-01"
    step_unit: str = "year"
    step_multiplier: int = 1
    seed: int = 1
    runs: int = 9
    workers: int = 1
    internal_migration: str = "none"
    max_age: int = 100
    male_fraction: float = 0.5
    params_death: str | None = None
    params_emigration: str | None = None
    params_birth: str | None = None
    params_internal_migration: str | None = None
    migration_tensor: str | None = None
    immigration: str | None = None
    initial_population: str | None = None
    reference_census: str | None = None
    base_dir: str = "."

    def __post_init__(self):
        if self.start_date >= self.end_date:
            raise InputError(f"start {self.start} must precede end {self.end}")
        if self.runs < 1:
            raise InputError("ensemble size must be >= 1")
        if self.workers < 1:
            raise InputError("workers must be >= 1")
        if self.internal_migration not in IM_MODES:
            raise InputError(f"internal_migration must be one of {IM_MODES}")
        if not 0 <= self.male_fraction <= 1:
            raise InputError("male_fraction must be in [0, 1]")
        if self.initial_population is None:
            raise InputError("config needs an initial_population file")
        if self.internal_migration == "full-regional":
            if not (self.params_internal_migration and self.migration_tensor):
                raise InputError("full-regional mode needs params_internal_migration "
                                 "and migration_tensor files")

    @property
    def start_date(self) -> date:
        return _parse_date(self.start)

    @property
    def end_date(self) -> date:
        return _parse_date(self.end)

    def resolve(self, key: str) -> Path | None:
        value = getattr(self, key)
        if value is None:
            return None
        return Path(self.base_dir) / value

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        pairs = read_key_values(path)
        valid = {f.name for f in fields(cls) if f.name != "base_dir"}
        kwargs: dict = {"base_dir": str(path.parent)}
        for key, raw in pairs.items():
            if key not in valid:
                raise InputError(f"{path}: unknown config key {key!r}")
            if key in ("step_multiplier", "seed", "runs", "workers", "max_age"):
                kwargs[key] = int(raw)
            elif key == "male_fraction":
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
        return cls(**kwargs)

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            for f in fields(self):
                if f.name == "base_dir":
                    continue
                value = getattr(self, f.name)
                if value is None:
                    continue
                fh.write(f"{f.name} = {value}\n")


def _parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise InputError(f"bad ISO date {text!r}: {exc}") from None
