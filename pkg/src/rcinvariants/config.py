"""Experiment configuration files.

A config is a flat TOML file whose keys are dotted ``section.name`` pairs::

    system.kind = "lorenz96"
    system.dimension = 10
    reservoir.size = 400
    search.beta = [1e-10, 1e-2, "log10"]

TOML tables (``[system]`` followed by ``dimension = 10``) are equivalent.
Parsing is strict: unknown keys and out-of-range values are errors, and the
keys in ``REQUIRED`` must be present. See ``README.md`` for the full key list.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cmaes import LOG10, CmaEsConfig, Dimension, SearchSpace
from .dynamics import LORENZ63, LORENZ96, IntegrationConfig, SystemSpec
from .errors import ConfigError, InvalidArgumentError
from .training import PARAM_NAMES, LossConfig, reservoir_search_space

INVARIANT_CHOICES = ("none", "k_les", "fractal_dimension", "both")

_DEFAULT_SPACE = {d.name: (d.lower, d.upper, d.scale)
                  for d in reservoir_search_space().dimensions}


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


# key -> (type check, type name, default, range check or None)
_SCHEMA: dict[str, tuple] = {
    "system.kind": (lambda v: v in (LORENZ96, LORENZ63), f"'{LORENZ96}' or '{LORENZ63}'",
                    None, None),
    "system.dimension": (_int, "integer", None, lambda v: v >= 3),
    "system.forcing": (_num, "number", 8.0, None),
    "integration.dt": (_num, "number", 0.01, lambda v: v > 0),
    "integration.n_transient": (_int, "integer", 5000, lambda v: v >= 0),
    "data.train_steps": (_int, "integer", 20_000, lambda v: v > 0),
    "data.val_steps": (_int, "integer", 10_000, lambda v: v > 0),
    "data.test_steps": (_int, "integer", 241_000, lambda v: v > 0),
    "data.climate_steps": (_int, "integer", 100_000, lambda v: v > 1),
    "reservoir.size": (_int, "integer", None, lambda v: v >= 10),
    "reservoir.washout": (_int, "integer", 200, lambda v: v >= 0),
    "invariants.provided": (lambda v: v in INVARIANT_CHOICES, "one of " + ", ".join(INVARIANT_CHOICES),
                            "none", None),
    "invariants.k": (_int, "integer", 1, lambda v: v >= 1),
    "invariants.source": (lambda v: v in ("model", "data"), "'model' or 'data'", "model", None),
    "invariants.le_steps": (_int, "integer", 100_000, lambda v: v >= 1),
    "invariants.qr_interval": (_int, "integer", 10, lambda v: v >= 1),
    "loss.epsilon1": (_num, "number", 1.0, lambda v: v >= 0),
    "loss.epsilon2": (lambda v: v == "auto" or _num(v), "number or 'auto'", "auto",
                      lambda v: v == "auto" or v >= 0),
    "loss.t_i": (_int, "integer", 0, lambda v: v >= 0),
    "loss.forecast_lyapunov_times": (_num, "number", 5.0, lambda v: v > 0),
    "loss.M": (_int, "integer", 7, lambda v: v >= 1),
    "loss.rc_le_steps": (_int, "integer", 5000, lambda v: v >= 1),
    "loss.rc_le_transient": (_int, "integer", 500, lambda v: v >= 0),
    "loss.normalize_invariants": (lambda v: isinstance(v, bool), "boolean", True, None),
    "loss.sync_len": (_int, "integer", 200, lambda v: v >= 1),
    "cma.population_size": (_int, "integer", 0, lambda v: v == 0 or v >= 4),
    "cma.max_generations": (_int, "integer", 100, lambda v: v >= 1),
    "cma.initial_step_size": (_num, "number", 0.3, lambda v: v > 0),
    "cma.target_loss": (lambda v: v == "none" or _num(v), "number or 'none'", "none", None),
    "evaluation.n_ics": (_int, "integer", 200, lambda v: v >= 1),
    "evaluation.epsilon": (_num, "number", 0.3, lambda v: v > 0),
    "evaluation.horizon": (_int, "integer", 1000, lambda v: v >= 1),
    "evaluation.sync_len": (_int, "integer", 200, lambda v: v >= 1),
    "evaluation.attractor_steps": (_int, "integer", 10_000, lambda v: v >= 1),
    "experiment.master_seed": (_int, "integer", 0, None),
    "experiment.output_dir": (lambda v: isinstance(v, str), "string", "runs", None),
    "experiment.save_data": (lambda v: isinstance(v, bool), "boolean", False, None),
}
for _name in PARAM_NAMES:
    _SCHEMA[f"search.{_name}"] = (
        lambda v: isinstance(v, list) and len(v) == 3 and _num(v[0]) and _num(v[1])
        and v[2] in ("linear", LOG10),
        "[lower, upper, 'linear'|'log10']", list(_DEFAULT_SPACE[_name]), None)

REQUIRED = ("system.kind", "system.dimension", "reservoir.size")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration; ``values`` holds every key."""

    values: dict[str, Any] = field(repr=False)

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    __hash__ = None

    def replace(self, **dotted) -> ExperimentConfig:
        """Copy with overrides; keyword ``a__b`` stands for key ``a.b``."""
        flat = dict(self.values)
        for k, v in dotted.items():
            flat[k.replace("__", ".")] = v
        return from_dict(flat)

    @property
    def system(self) -> SystemSpec:
        return SystemSpec(kind=self["system.kind"], dimension=self["system.dimension"],
                          forcing=float(self["system.forcing"]))

    @property
    def integration(self) -> IntegrationConfig:
        n = self["data.train_steps"] + self["data.val_steps"] + self["data.test_steps"]
        return IntegrationConfig(dt=float(self["integration.dt"]), n_steps=n,
                                 n_transient=self["integration.n_transient"],
                                 seed=self["experiment.master_seed"])

    @property
    def N(self) -> int:
        return self["reservoir.size"]

    @property
    def search_space(self) -> SearchSpace:
        return SearchSpace(tuple(
            Dimension(n, float(self[f"search.{n}"][0]), float(self[f"search.{n}"][1]),
                      self[f"search.{n}"][2])
            for n in PARAM_NAMES))

    def loss(self, lambda1: float) -> LossConfig:
        """Loss settings; the validation forecast length is set in Lyapunov times."""
        dt = float(self["integration.dt"])
        t_i = self["loss.t_i"]
        n_fc = max(1, int(round(self["loss.forecast_lyapunov_times"] / (lambda1 * dt))))
        eps2 = self["loss.epsilon2"]
        return LossConfig(
            epsilon1=float(self["loss.epsilon1"]),
            epsilon2=None if eps2 == "auto" else float(eps2),
            t_i=t_i, t_f=t_i + n_fc, M=self["loss.M"],
            rc_le_steps=self["loss.rc_le_steps"], rc_le_transient=self["loss.rc_le_transient"],
            normalize_invariants=self["loss.normalize_invariants"],
            sync_len=self["loss.sync_len"], washout=self["reservoir.washout"])

    @property
    def cma(self) -> CmaEsConfig:
        target = self["cma.target_loss"]
        return CmaEsConfig(
            population_size=self["cma.population_size"] or None,
            max_generations=self["cma.max_generations"],
            initial_step_size=float(self["cma.initial_step_size"]),
            target_loss=None if target == "none" else float(target))

    def sha256(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()


def _flatten(table: dict, prefix: str = "") -> dict[str, Any]:
    flat = {}
    for k, v in table.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def from_dict(flat: dict[str, Any]) -> ExperimentConfig:
    unknown = sorted(set(flat) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    missing = [k for k in REQUIRED if k not in flat]
    if missing:
        raise ConfigError(f"missing required config field(s): {', '.join(missing)}")
    values = {}
    for key, (check, type_name, default, in_range) in _SCHEMA.items():
        v = flat.get(key, default)
        if not check(v):
            raise ConfigError(f"{key}: expected {type_name}, got {v!r}")
        if in_range is not None and not in_range(v):
            raise ConfigError(f"{key}: value {v!r} out of range")
        values[key] = list(v) if isinstance(v, list) else v
    if values["invariants.k"] > values["system.dimension"]:
        raise ConfigError("invariants.k: value exceeds system.dimension")
    cfg = ExperimentConfig(values)
    try:
        cfg.system
        cfg.search_space
        cfg.cma
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return from_dict(_flatten(table))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        return loads(path.read_text())
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return str(v)


def dumps(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {_toml_value(cfg.values[k])}\n" for k in sorted(cfg.values))


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
