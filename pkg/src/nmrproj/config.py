"""Experiment configuration from sectioned ``key = value`` files.

Example::

    [cluster]
    b_ortho_hz = 1400
    offset_hz = 0

    [propagation]
    dt_us = 0.5
    convergence = 1e-4

    [acquisition]
    points = 8192
    dwell_us = 50
    broadening_hz = 2
    read_angle_deg = 1

    [measurement]
    total = 1
    readout = stick

    [paths]
    output_dir = results

Every section and key is optional; unknown ones are errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .pulse_engine import PropagationConfig
from .spectroscopy import AcquisitionParams
from .system_model import ClusterConfig


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


@dataclass(frozen=True)
class ExperimentConfig:
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    acquisition: AcquisitionParams = field(default_factory=AcquisitionParams)
    total: float = 1.0
    readout: str = "stick"
    output_dir: Path = Path("results")

    def with_dt_us(self, dt_us: float) -> "ExperimentConfig":
        if not dt_us > 0:
            raise ConfigError("dt_us must be positive")
        return replace(self, propagation=replace(self.propagation, dt=dt_us * 1e-6))


def _positive(v):
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _positive_int(v):
    if float(v) != int(float(v)):
        raise ValueError("must be an integer")
    return _positive(int(float(v)))


def _readout(v):
    if v not in ("stick", "fid"):
        raise ValueError("must be 'stick' or 'fid'")
    return v


# section -> key -> (converter, destination field, scale)
_SCHEMA = {
    "cluster": {
        "b_ortho_hz": (float, "b_ortho_hz", 1.0),
        "offset_hz": (float, "offset_hz", 1.0),
    },
    "propagation": {
        "dt_us": (lambda v: _positive(float(v)), "dt", 1e-6),
        "convergence": (lambda v: _positive(float(v)), "convergence", 1.0),
    },
    "acquisition": {
        "points": (_positive_int, "points", None),
        "dwell_us": (lambda v: _positive(float(v)), "dwell_s", 1e-6),
        "broadening_hz": (float, "broadening_hz", 1.0),
        "read_angle_deg": (lambda v: _positive(float(v)), "read_angle_deg", 1.0),
        "zero_fill": (_positive_int, "zero_fill", None),
    },
    "measurement": {
        "total": (lambda v: _positive(float(v)), "total", 1.0),
        "readout": (_readout, "readout", None),
    },
    "paths": {
        "output_dir": (str, "output_dir", None),
    },
}


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse configuration text; ``source`` names the origin in errors."""
    cp = configparser.ConfigParser(interpolation=None, strict=True, default_section="\0none")
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    values: dict[str, dict] = {name: {} for name in _SCHEMA}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        schema = _SCHEMA[section]
        for key, raw in cp.items(section):
            if key not in schema:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            conv, dest, scale = schema[key]
            try:
                v = conv(raw.strip())
            except ValueError as exc:
                raise ConfigError(f"{source}: [{section}] {key} = {raw!r}: {exc}") from None
            values[section][dest] = v * scale if scale is not None else v

    try:
        return ExperimentConfig(
            cluster=ClusterConfig(**values["cluster"]),
            propagation=PropagationConfig(**values["propagation"]),
            acquisition=AcquisitionParams(**values["acquisition"]),
            total=values["measurement"].get("total", 1.0),
            readout=values["measurement"].get("readout", "stick"),
            output_dir=Path(values["paths"].get("output_dir", "results")),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    """Read and parse a configuration file; ``OSError`` propagates."""
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))
