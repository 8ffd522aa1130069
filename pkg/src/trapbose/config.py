"""Run configuration (key = value files) and run manifests.

A config file is a flat list of ``key = value`` lines; ``#`` starts a
comment.  Unknown keys are rejected so typos do not silently fall back to
defaults.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__
from .errors import DataError, ValidationError
from .imaging import DEFAULT_CALIBRATION
from .units import DEFAULT_PIXEL_SIZE, RB87_D2_WAVELENGTH, RB87_MASS, RB87_SCATTERING_LENGTH, TrapGeometry

# key: (type, default)
KEYS = {
    "omega_perp_hz": (float, 2.75e3),
    "omega_z_hz": (float, 15.7),
    "mass_kg": (float, RB87_MASS),
    "scattering_length_m": (float, RB87_SCATTERING_LENGTH),
    "probe_wavelength_m": (float, RB87_D2_WAVELENGTH),
    "pixel_size_m": (float, DEFAULT_PIXEL_SIZE),
    "calibration_factor": (float, DEFAULT_CALIBRATION),
    "n_pixels": (int, 201),
    "frame_rows": (int, 11),
    "transverse_width_pixels": (float, 1.0),
    "seed": (int, 0),
}

_GEOM_KEYS = {
    "omega_perp_hz": "omega_perp",
    "omega_z_hz": "omega_z",
    "mass_kg": "mass",
    "scattering_length_m": "scattering_length",
    "probe_wavelength_m": "probe_wavelength",
}


def parse_key_values(text, source="<config>", allowed=None):
    """Parse ``key = value`` lines into a dict of strings."""
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                       interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[root]\n" + text, source=source)
    except configparser.Error as exc:
        raise DataError(f"{source}: {exc}") from exc
    values = dict(parser["root"])
    if allowed is not None:
        unknown = sorted(set(values) - set(allowed))
        if unknown:
            raise ValidationError(f"{source}: unknown keys {', '.join(unknown)}")
    return values


@dataclass
class Config:
    values: dict
    defaults_used: tuple
    source: str = None

    def __getitem__(self, key):
        return self.values[key]

    def geometry(self):
        kwargs = {}
        for key, name in _GEOM_KEYS.items():
            value = self.values[key]
            kwargs[name] = 2 * math.pi * value if key.endswith("_hz") else value
        used = tuple(_GEOM_KEYS[k] for k in self.defaults_used if k in _GEOM_KEYS)
        return TrapGeometry(defaults_used=used, **kwargs)

    @property
    def pixel_size(self):
        return self.values["pixel_size_m"]

    def snapshot(self):
        return {"values": dict(sorted(self.values.items())), "defaults_used": sorted(self.defaults_used),
                "source": self.source}


def load_config(path=None, overrides=None):
    text = ""
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
    raw = parse_key_values(text, os.fspath(path) if path else "<defaults>", KEYS)
    raw.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    values, used = {}, []
    for key, (kind, default) in KEYS.items():
        if key in raw:
            try:
                values[key] = kind(raw[key])
            except ValueError as exc:
                raise ValidationError(f"config key {key}: cannot parse {raw[key]!r}") from exc
        else:
            values[key] = default
            used.append(key)
    for key in ("pixel_size_m", "n_pixels", "frame_rows", "transverse_width_pixels"):
        if not values[key] > 0:
            raise ValidationError(f"config key {key} must be positive")
    return Config(values, tuple(used), os.fspath(path) if path else None)


@dataclass
class RunManifest:
    command: list
    config: dict
    seed: int
    provenance: dict
    versions: dict = field(default_factory=lambda: {
        "trapbose": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        "python": platform.python_version()})
    created: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def _stable(self):
        return {"command": self.command, "config": self.config, "seed": self.seed,
                "provenance": self.provenance, "versions": self.versions}

    @property
    def manifest_id(self):
        blob = json.dumps(self._stable(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def filename(self):
        return f"manifest-{self.manifest_id}.json"

    def write(self, out_dir):
        path = os.path.join(out_dir, self.filename)
        data = dict(self._stable(), manifest_id=self.manifest_id, created=self.created)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path
