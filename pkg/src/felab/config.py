"""Validated run configuration for the command-line driver."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError
from .fe import MAX_DEGREE

PROBLEMS = ("sinsin", "constant-rhs", "circle-demo")
SOLVERS = ("assembled-cg", "mf-cg", "gmg-cg")


@dataclass
class RunConfig:
    dim: int = 2
    degree: int = 1
    mapping_degree: int = 1
    min_level: int = 3
    max_level: int = 6
    problem: str = "sinsin"
    solver: str = "assembled-cg"
    tolerance: float = 1e-12
    vtk_output: str | None = None
    csv_output: str | None = None
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}", key=key)
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        def integer(key, lo, hi=None):
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, int) or v < lo or (hi is not None and v > hi):
                rng = f"{lo}..{hi}" if hi is not None else f">= {lo}"
                raise ConfigError(f"{key!r} must be an integer in {rng}, got {v!r}", key=key)

        integer("dim", 2, 3)
        integer("degree", 1, MAX_DEGREE)
        integer("mapping_degree", 1, 8)
        integer("min_level", 0)
        integer("max_level", 0)
        integer("threads", 1)
        if self.max_level < self.min_level:
            raise ConfigError("'max_level' must not be smaller than 'min_level'", key="max_level")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"'problem' must be one of {', '.join(PROBLEMS)}, got {self.problem!r}", key="problem")
        if self.solver not in SOLVERS:
            raise ConfigError(f"'solver' must be one of {', '.join(SOLVERS)}, got {self.solver!r}", key="solver")
        if isinstance(self.tolerance, bool) or not isinstance(self.tolerance, (int, float)) \
                or not 0 < self.tolerance < 1:
            raise ConfigError(f"'tolerance' must be a number in (0, 1), got {self.tolerance!r}", key="tolerance")
        self.tolerance = float(self.tolerance)
        if self.problem == "circle-demo":
            if self.dim != 2:
                raise ConfigError("'circle-demo' is two-dimensional; set 'dim' to 2", key="dim")
            if self.solver == "gmg-cg":
                raise ConfigError("'gmg-cg' needs a globally refined mesh; 'circle-demo' is adaptive", key="solver")
        for key in ("vtk_output", "csv_output"):
            v = getattr(self, key)
            if v is not None and not isinstance(v, str):
                raise ConfigError(f"{key!r} must be a path string", key=key)
