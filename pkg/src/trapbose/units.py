"""Reduced units, trap and cloud descriptors, shared grid types.

Energies are in units of hbar*omega_perp and are measured from the trap
bottom, so the transverse zero-point energy of a single atom is 1.
Transverse lengths are in a_perp = sqrt(hbar / (m omega_perp)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar, k as k_B

from .errors import ValidationError

# Literature values for 87Rb; overridable through the configuration file.
RB87_MASS = 1.443e-25  # kg
RB87_SCATTERING_LENGTH = 5.24e-9  # m
RB87_D2_WAVELENGTH = 780.24e-9  # m
DEFAULT_OMEGA_PERP = 2 * math.pi * 2.75e3  # rad/s
DEFAULT_OMEGA_Z = 2 * math.pi * 15.7  # rad/s
DEFAULT_PIXEL_SIZE = 6.0e-6  # m


@dataclass(frozen=True)
class TrapGeometry:
    """Cylindrically symmetric harmonic trap holding one atomic species (SI units)."""

    omega_perp: float = DEFAULT_OMEGA_PERP
    omega_z: float = DEFAULT_OMEGA_Z
    mass: float = RB87_MASS
    scattering_length: float = RB87_SCATTERING_LENGTH
    probe_wavelength: float = RB87_D2_WAVELENGTH
    # names of the fields that were taken from literature defaults
    defaults_used: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("omega_perp", "omega_z", "mass", "scattering_length", "probe_wavelength"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive, got {value!r}")

    @classmethod
    def from_frequencies(cls, f_perp_hz=2.75e3, f_z_hz=15.7, **kwargs):
        return cls(omega_perp=2 * math.pi * f_perp_hz, omega_z=2 * math.pi * f_z_hz, **kwargs)

    @property
    def aspect_ratio(self):
        """omega_z / omega_perp."""
        return self.omega_z / self.omega_perp

    def provenance(self):
        return {
            "omega_perp_hz": self.omega_perp / (2 * math.pi),
            "omega_z_hz": self.omega_z / (2 * math.pi),
            "mass_kg": self.mass,
            "scattering_length_m": self.scattering_length,
            "probe_wavelength_m": self.probe_wavelength,
            "literature_defaults": list(self.defaults_used),
        }


@dataclass(frozen=True)
class ReducedUnits:
    energy_unit: float  # J
    transverse_length_unit: float  # m
    longitudinal_length_unit: float  # m
    dimensionless_coupling: float  # g / (hbar omega_perp a_perp^3)
    scattering_length: float  # in units of a_perp
    aspect_ratio: float  # omega_z / omega_perp

    def energy_to_si(self, e):
        return np.multiply(e, self.energy_unit)

    def energy_from_si(self, e_joule):
        return np.divide(e_joule, self.energy_unit)

    def temperature_to_kelvin(self, t):
        return np.multiply(t, self.energy_unit / k_B)

    def length_to_si(self, x):
        return np.multiply(x, self.transverse_length_unit)

    def length_from_si(self, x_m):
        return np.divide(x_m, self.transverse_length_unit)

    def linear_density_to_si(self, n):
        """Atoms per a_perp -> atoms per metre."""
        return np.divide(n, self.transverse_length_unit)

    def linear_density_from_si(self, n_per_m):
        return np.multiply(n_per_m, self.transverse_length_unit)

    def thermal_wavelength(self, temperature):
        """Longitudinal de Broglie wavelength sqrt(2 pi hbar^2 / m k_B T), in a_perp."""
        return math.sqrt(2 * math.pi / temperature)

    def trap_energy(self, z_m):
        """Longitudinal trap energy m omega_z^2 z^2 / 2 at z (metres), in hbar omega_perp."""
        x = np.divide(z_m, self.transverse_length_unit)
        return 0.5 * self.aspect_ratio**2 * np.square(x)


def make_reduced_units(geom: TrapGeometry) -> ReducedUnits:
    a_perp = math.sqrt(hbar / (geom.mass * geom.omega_perp))
    a_z = math.sqrt(hbar / (geom.mass * geom.omega_z))
    return ReducedUnits(
        energy_unit=hbar * geom.omega_perp,
        transverse_length_unit=a_perp,
        longitudinal_length_unit=a_z,
        dimensionless_coupling=4 * math.pi * geom.scattering_length / a_perp,
        scattering_length=geom.scattering_length / a_perp,
        aspect_ratio=geom.aspect_ratio,
    )


@dataclass(frozen=True)
class ThermoState:
    """Central chemical potential and temperature, both in hbar*omega_perp."""

    mu0: float
    temperature: float

    def __post_init__(self):
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValidationError(f"temperature must be positive, got {self.temperature!r}")
        if not np.isfinite(self.mu0):
            raise ValidationError("mu0 must be finite")


def local_chemical_potential(state: ThermoState, geom: TrapGeometry, z):
    """mu0 - m omega_z^2 z^2 / 2 in hbar*omega_perp; ``z`` in metres."""
    return state.mu0 - make_reduced_units(geom).trap_energy(z)


def z_for_trap_energy(energy, geom: TrapGeometry):
    """Positive z (metres) at which the longitudinal trap energy equals ``energy``."""
    units = make_reduced_units(geom)
    if np.any(np.asarray(energy) < 0):
        raise ValidationError("trap energy must be non-negative")
    return units.length_to_si(np.sqrt(2 * np.asarray(energy)) / units.aspect_ratio)


@dataclass(frozen=True)
class RadialGrid:
    """Quadrature nodes for radially symmetric functions.

    Nodes are Gauss-Legendre points in s = r^2 on [0, r_max^2], which makes
    integrals of smooth even functions of r spectrally accurate.
    ``weights`` integrate against the 2D measure: sum(w * f) ~ int f 2 pi r dr.
    """

    r: np.ndarray
    weights: np.ndarray
    r_max: float

    def __post_init__(self):
        r = np.asarray(self.r)
        if r.ndim != 1 or r.size < 2:
            raise ValidationError("radial grid needs at least two points")
        if r[0] < 0 or np.any(np.diff(r) <= 0):
            raise ValidationError("radial grid must be non-negative and strictly increasing")

    @classmethod
    def gauss(cls, n_points=400, r_max=10.0):
        if r_max <= 0 or n_points < 2:
            raise ValidationError("need r_max > 0 and at least two points")
        x, w = np.polynomial.legendre.leggauss(int(n_points))
        s = 0.5 * (x + 1.0) * r_max**2
        # int f 2 pi r dr = pi int f ds
        weights = np.pi * 0.5 * r_max**2 * w
        return cls(r=np.sqrt(s), weights=weights, r_max=float(r_max))

    @property
    def s(self):
        return self.r**2

    def integrate(self, f):
        """int f(r) 2 pi r dr."""
        return float(np.dot(self.weights, f))


@dataclass(frozen=True)
class LinearDensityProfile:
    """Longitudinal density n(z) on a uniform grid.

    ``z`` in metres, ``n`` in atoms per metre.  Model profiles are
    non-negative; measured ones may dip below zero in noisy wings.
    """

    z: np.ndarray
    n: np.ndarray
    pixel_size: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        n = np.asarray(self.n, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "n", n)
        if z.ndim != 1 or z.shape != n.shape:
            raise ValidationError("z and n must be 1D arrays of equal length")
        if z.size >= 3:
            dz = np.diff(z)
            if np.any(dz <= 0) or not np.allclose(dz, dz[0], rtol=1e-6, atol=0):
                raise ValidationError("profile grid must be uniform and increasing")

    @property
    def dz(self):
        return float(self.z[1] - self.z[0])

    def atoms_per_pixel(self, pixel_size=None):
        pixel = pixel_size or self.pixel_size or DEFAULT_PIXEL_SIZE
        return self.n * pixel

    def total_atoms(self):
        return float(np.sum(self.n) * self.dz)

    def peak(self):
        return float(np.max(self.n))

    def is_nonnegative(self):
        return bool(np.all(self.n >= 0))


def pixel_grid(n_pixels, pixel_size=DEFAULT_PIXEL_SIZE):
    """Symmetric grid of pixel centres, with a pixel centred on z = 0 when n_pixels is odd."""
    idx = np.arange(n_pixels) - (n_pixels - 1) / 2
    return idx * pixel_size
