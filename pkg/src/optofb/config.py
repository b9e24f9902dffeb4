"""Run configuration: flat ``key=value`` files and command-line overrides.

A config file holds one ``key = value`` pair per line, SI units, ``#`` starts
a comment.  Keys are the :class:`~optofb.model.PhysicalConfig` field names
plus the run keys listed in :data:`RUN_KEYS`.  List-valued keys (``thetas``,
``temperatures``) take comma-separated numbers.
"""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from .model import ConfigError, PhysicalConfig
from .spectra import FeedbackSetting

#: environment variable that redirects relative output paths
OUT_DIR_ENV = "OPTOFB_OUT_DIR"

Spacing = Literal["linear", "log"]
Format = Literal["csv", "json"]
Mode = Literal["spectra", "fig1", "optimize", "verify"]

FIG1_TEMPERATURES = (300.0, 70.0, 4.0)


class UsageError(ValueError):
    """Malformed run configuration (as opposed to unphysical parameters)."""


@dataclass(frozen=True)
class Grid:
    omega_min: float = 1e4
    omega_max: float = 1e8
    n_points: int = 2000
    spacing: Spacing = "log"

    def __post_init__(self):
        if not (math.isfinite(self.omega_min) and self.omega_min > 0):
            raise UsageError(f"omega_min must be finite and > 0, got {self.omega_min!r}")
        if not (math.isfinite(self.omega_max) and self.omega_max > self.omega_min):
            raise UsageError("omega_max must be finite and larger than omega_min")
        if self.n_points < 2:
            raise UsageError(f"n_points must be >= 2, got {self.n_points}")
        if self.spacing not in ("linear", "log"):
            raise UsageError(f"spacing must be 'linear' or 'log', got {self.spacing!r}")

    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.omega_min, self.omega_max, self.n_points)
        return np.linspace(self.omega_min, self.omega_max, self.n_points)


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs.

    ``temperatures`` and ``feedback`` default to None, meaning "whatever the
    selected mode uses by default" (Fig. 1 sweeps 300, 70, 4 K with the
    per-frequency optimal gain; the other modes use ``physical.T`` and the
    configured ``lambda_fb``).
    """

    physical: PhysicalConfig = field(default_factory=PhysicalConfig)
    grid: Grid = field(default_factory=Grid)
    thetas: tuple[float, ...] = (0.0,)
    temperatures: Optional[tuple[float, ...]] = None
    feedback: Optional[FeedbackSetting] = None
    out: Optional[str] = None
    format: Format = "csv"
    seed: int = 0
    mode: Mode = "spectra"
    epsilon: float = 0.01          # squeezing-bandwidth threshold
    rel_tol: float = 1e-9          # oracle comparison tolerance
    mc_realizations: int = 4000    # 0 disables the Monte Carlo check
    mc_points: int = 201

    def __post_init__(self):
        if not self.thetas:
            raise UsageError("thetas must not be empty")
        if self.temperatures is not None and not self.temperatures:
            raise UsageError("temperatures must not be empty")
        if self.format not in ("csv", "json"):
            raise UsageError(f"format must be csv or json, got {self.format!r}")
        if self.mode not in ("spectra", "fig1", "optimize", "verify"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if not 0 < self.epsilon < 1:
            raise UsageError("epsilon must lie in (0, 1)")
        if self.mc_realizations == 1 or self.mc_realizations < 0:
            raise UsageError("mc_realizations must be 0 (off) or >= 2")
        if self.mc_points < 2:
            raise UsageError("mc_points must be >= 2")

    def temperature_list(self) -> tuple[float, ...]:
        if self.temperatures is not None:
            return self.temperatures
        return FIG1_TEMPERATURES if self.mode == "fig1" else (self.physical.T,)

    def feedback_setting(self) -> FeedbackSetting:
        if self.feedback is not None:
            return self.feedback
        if self.mode in ("fig1", "verify"):
            return FeedbackSetting("optimal_per_omega")
        if self.physical.lambda_fb != 0:
            return FeedbackSetting("fixed", self.physical.lambda_fb)
        return FeedbackSetting("off")

    def physical_at(self, T: float) -> PhysicalConfig:
        return dataclasses.replace(self.physical, T=T)

    def output_path(self) -> Optional[Path]:
        if self.out is None or self.out == "-":
            return None
        p = Path(self.out)
        base = os.environ.get(OUT_DIR_ENV)
        if base and not p.is_absolute():
            p = Path(base) / p
        return p


_PHYSICAL_KEYS = {f.name for f in dataclasses.fields(PhysicalConfig)}
_GRID_KEYS = {f.name for f in dataclasses.fields(Grid)}
RUN_KEYS = ("thetas", "temperatures", "feedback", "out", "format", "seed", "mode",
            "epsilon", "rel_tol", "mc_realizations", "mc_points") + tuple(sorted(_GRID_KEYS))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _convert(key: str, text: str):
    text = text.strip()
    if key in _PHYSICAL_KEYS:
        if key in ("omega_e", "T_mech", "T_elec") and text.lower() in ("", "none"):
            return None
        return float(text)
    if key in ("n_points", "seed", "mc_realizations", "mc_points"):
        return int(text)
    if key in ("omega_min", "omega_max", "epsilon", "rel_tol"):
        return float(text)
    if key in ("thetas", "temperatures"):
        return _floats(text)
    if key == "feedback":
        return FeedbackSetting.parse(text)
    return text


def parse_pairs(lines, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines into typed values keyed by field name."""
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, text = line.partition("=")
        key = key.strip()
        if not sep:
            raise UsageError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        if key not in _PHYSICAL_KEYS and key not in RUN_KEYS:
            raise UsageError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, text)
        except ValueError as exc:
            raise UsageError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def read_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_pairs(fh, source=str(path))


def build_run_config(values: dict) -> RunConfig:
    """Assemble a :class:`RunConfig` from parsed key/value pairs.

    Raises :class:`UsageError` for malformed run settings and
    :class:`~optofb.model.ConfigError` for unphysical parameters.
    """
    phys = {k: v for k, v in values.items() if k in _PHYSICAL_KEYS}
    grid = {k: v for k, v in values.items() if k in _GRID_KEYS}
    run = {k: v for k, v in values.items() if k not in _PHYSICAL_KEYS and k not in _GRID_KEYS}
    temps = run.get("temperatures")
    if temps is not None:
        for T in temps:
            if not (math.isfinite(T) and T > 0):
                raise ConfigError(f"temperatures must be finite and > 0, got {T!r}")
    return RunConfig(physical=PhysicalConfig(**phys), grid=Grid(**grid), **run)
