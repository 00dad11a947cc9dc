"""Experiment configuration and its flat ``key = value`` text format.

Grammar, one entry per line::

    # comment
    key = value

Blank lines and ``#`` comments are ignored. Booleans are ``true``/``false``,
lists are comma-separated, floats are written with ``repr`` so a dump/load
round trip is exact. Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Tuple, Union

from .score import PERTURBATION_MODES
from .sde import VAR_FLOOR, GaussianSpec

DATA_KINDS = ("gaussian", "line_y_equals_x")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    T: float = 5.0
    N: int = 500
    n_paths: int = 10_000
    d: int = 1
    data: str = "gaussian"
    data_mean: List[float] = field(default_factory=lambda: [2.0])
    data_var: List[float] = field(default_factory=lambda: [4.0])
    n_points: int = 500
    var_floor: float = VAR_FLOOR
    eps_score: float = 0.2
    perturbation_mode: str = "constant_offset"
    master_seed: int = 0
    out_dir: str = "out"
    emit_svg: bool = True
    T_grid: List[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0, 8.0])
    c_score: float = 1.0
    c_init: float = 1.0
    n_plot_paths: int = 50
    hist_bins: int = 60
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.T > 0, f"T must be > 0, got {self.T}")
        for name in ("N", "n_paths", "d", "n_points", "n_plot_paths", "hist_bins", "workers"):
            need(getattr(self, name) >= 1, f"{name} must be >= 1")
        need(self.eps_score >= 0, f"eps_score must be >= 0, got {self.eps_score}")
        need(self.var_floor > 0, "var_floor must be > 0")
        need(0 <= self.master_seed < 2**64, "master_seed must be an unsigned 64-bit integer")
        need(self.data in DATA_KINDS, f"data must be one of {DATA_KINDS}")
        need(self.perturbation_mode in PERTURBATION_MODES,
             f"perturbation_mode must be one of {PERTURBATION_MODES}")
        need(all(t > 0 for t in self.T_grid) and len(self.T_grid) >= 1, "T_grid entries must be > 0")
        need(self.c_score >= 0 and self.c_init >= 0, "bound constants must be >= 0")
        if self.data == "gaussian":
            for name in ("data_mean", "data_var"):
                n = len(getattr(self, name))
                need(n in (1, self.d), f"{name} must have 1 or d={self.d} entries")
            need(all(v > 0 for v in self.data_var), "data_var entries must be > 0")
        else:
            need(self.d == 2, "line_y_equals_x data is two-dimensional; set d = 2")

    def gaussian_data(self) -> GaussianSpec:
        if self.data != "gaussian":
            raise ConfigError(f"data {self.data!r} is not Gaussian")
        mean = self.data_mean * self.d if len(self.data_mean) == 1 else self.data_mean
        var = self.data_var * self.d if len(self.data_var) == 1 else self.data_var
        return GaussianSpec(mean, var)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _field_kind(f) -> str:
    t = str(f.type)
    if t.startswith("List"):
        return "list"
    return t


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _parse(kind: str, key: str, text: str):
    try:
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "list":
            return [float(v) for v in text.split(",") if v.strip()]
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc


def dumps(config: ExperimentConfig) -> str:
    lines = [f"{f.name} = {_format(getattr(config, f.name))}" for f in fields(config)]
    return "\n".join(lines) + "\n"


def loads(text: str) -> ExperimentConfig:
    kinds = {f.name: _field_kind(f) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse(kinds[key], key, value)
    return ExperimentConfig(**values)


def load(path: Union[str, Path]) -> ExperimentConfig:
    return loads(Path(path).read_text(encoding="utf-8"))


def dump(config: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(config), encoding="utf-8")
