"""Experiment configuration files.

The format is INI-style text read with :mod:`configparser`::

    [run]
    t_f = 1000
    method = expm

    [grid]
    delta_a = linspace(0, 2.8, 41)
    g = logspace(-3, -0.5229, 41)

    [ion]
    n_system = 4

Sections and keys outside the schema are rejected.  List values accept
comma-separated numbers, ``linspace(a, b, n)``, ``logspace(a, b, n)`` (base-10
exponents), ``geomspace(a, b, n)`` and ``sqrt(x)`` as a number.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from .ions import IonChainConfig

__all__ = ["ConfigError", "ExperimentConfig", "parse_number", "parse_list", "load_config", "EXPERIMENTS"]

EXPERIMENTS = (
    "dynamics",
    "sweep",
    "scaling",
    "ground-state",
    "heating",
    "anisotropy",
    "ion-report",
    "steady-state",
)

ION_EXPERIMENTS = ("heating", "anisotropy", "ion-report")


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


_NUMBER = re.compile(r"^\s*sqrt\(\s*([^()]+?)\s*\)\s*$")
_RANGE = re.compile(r"^\s*(linspace|logspace|geomspace)\(\s*([^()]*)\)\s*$")


def parse_number(text: str) -> float:
    text = text.strip()
    m = _NUMBER.match(text)
    try:
        if m:
            return math.sqrt(float(m.group(1)))
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def parse_list(text: str) -> tuple[float, ...]:
    m = _RANGE.match(text)
    if m:
        kind, args = m.group(1), [a for a in m.group(2).split(",")]
        if len(args) != 3:
            raise ConfigError(f"{kind} needs three arguments")
        a, b = parse_number(args[0]), parse_number(args[1])
        try:
            n = int(args[2])
        except ValueError:
            raise ConfigError(f"{kind} count must be an integer") from None
        if n < 1:
            raise ConfigError(f"{kind} count must be positive")
        fn = {"linspace": np.linspace, "logspace": np.logspace, "geomspace": np.geomspace}[kind]
        return tuple(float(v) for v in fn(a, b, n))
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise ConfigError("empty list")
    return tuple(parse_number(s) for s in items)


def _int_list(text: str) -> tuple[int, ...]:
    vals = parse_list(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers: {text!r}")
    return tuple(int(v) for v in vals)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ConfigError(f"{t!r} not one of {', '.join(options)}")
        return t
    return parse


def _pairs(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.split(","):
        parts = item.split(":")
        if len(parts) != 2:
            raise ConfigError(f"pair must read g:kappa, got {item!r}")
        out.append((parse_number(parts[0]), parse_number(parts[1])))
    return tuple(out)


def _optional(parse):
    def inner(text: str):
        return None if text.strip().lower() in ("", "none", "auto") else parse(text)
    return inner


def _int(text: str) -> int:
    v = parse_number(text)
    if v != int(v):
        raise ConfigError(f"expected an integer: {text!r}")
    return int(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment run needs; every field has a sensible default.

    ``None`` grid entries mean "use the experiment's built-in default".
    ``kappa = None`` ties the damping to the coupling (``kappa = g``).
    """

    experiment: str = "dynamics"
    model: str | None = None
    t_f: float = 1000.0
    samples: int = 101
    method: str = "expm"
    boson_levels: int | None = None
    target: str = "spin-wave"
    asymptotic: bool = False
    N: tuple[int, ...] | None = None
    n_s: tuple[int, ...] | None = None
    delta_a: tuple[float, ...] | None = None
    g: tuple[float, ...] | None = None
    kappa: tuple[float, ...] | None = None
    zeta: tuple[float, ...] | None = None
    anisotropy: tuple[float, ...] | None = None
    pairs: tuple[tuple[float, float], ...] | None = None
    window: float = 0.5
    ratio_kappa: float = 0.1
    ion: dict = field(default_factory=dict)
    out: str = "results"
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        source = "ion-chain" if self.experiment in ION_EXPERIMENTS else "ideal-dsbc"
        if self.model is None:
            object.__setattr__(self, "model", source)
        elif self.model != source:
            raise ConfigError(f"experiment {self.experiment!r} runs on the {source} model")
        if not self.t_f > 0:
            raise ConfigError("t_f must be positive")
        if self.samples < 2:
            raise ConfigError("samples must be at least 2")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for name in ("N", "n_s", "delta_a", "g", "kappa", "zeta", "anisotropy", "pairs"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise ConfigError(f"grid {name} is empty")
        unknown = set(self.ion) - {f.name for f in fields(IonChainConfig)}
        if unknown:
            raise ConfigError(f"unknown ion keys: {', '.join(sorted(unknown))}")

    def echo(self) -> dict[str, Any]:
        """Plain-data view used for the JSON summary and the run hash."""
        out = {}
        for f in fields(self):
            if f.name in ("out", "workers"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            elif isinstance(v, dict):
                v = {k: (list(x) if isinstance(x, tuple) else x) for k, x in sorted(v.items())}
            out[f.name] = v
        return out

    def ion_config(self, **extra) -> IonChainConfig:
        return IonChainConfig(**{**self.ion, **extra})

    def replace(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, **changes)


_SCHEMA: dict[str, dict[str, Any]] = {
    "run": {
        "model": _choice("ideal-dsbc", "ion-chain"),
        "t_f": parse_number,
        "samples": _int,
        "method": _choice("expm", "rk45", "rk4"),
        "boson_levels": _int,
        "target": _choice("spin-wave", "w", "ground", "ideal", "dipolar"),
        "asymptotic": _bool,
        "window": parse_number,
        "ratio_kappa": parse_number,
    },
    "grid": {
        "N": _int_list,
        "n_s": _int_list,
        "delta_a": parse_list,
        "g": parse_list,
        "kappa": _optional(parse_list),
        "zeta": parse_list,
        "anisotropy": parse_list,
        "pairs": _pairs,
    },
}

_ION_TYPES = {
    "cool_sites": _optional(_int_list),
    "cool_mass": _optional(parse_number),
    "k_z": _optional(parse_number),
    "phi_z": _optional(parse_number),
    "wave": _choice("standing", "traveling"),
}


def _ion_value(key: str, text: str):
    if key in _ION_TYPES:
        return _ION_TYPES[key](text)
    names = {f.name: f for f in fields(IonChainConfig)}
    if key not in names:
        raise ConfigError(f"unknown key [ion] {key}")
    if key in ("n_system", "n_cool"):
        return _int(text)
    return parse_number(text)


def load_config(text: str | None, experiment: str, **overrides) -> ExperimentConfig:
    """Parse config text (or ``None`` for defaults) into an :class:`ExperimentConfig`."""
    values: dict[str, Any] = {}
    if text:
        parser = configparser.ConfigParser(
            interpolation=None, default_section="__none__", inline_comment_prefixes=(";", "#")
        )
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        ion = {}
        for section in parser.sections():
            if section == "ion":
                for key, raw in parser.items(section):
                    ion[key] = _ion_value(key, raw)
                continue
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key [{section}] {key}")
                values[key] = _SCHEMA[section][key](raw)
        if ion:
            values["ion"] = ion
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(experiment=experiment, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
