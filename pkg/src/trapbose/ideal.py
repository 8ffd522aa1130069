"""Ideal Bose gas in a 2D isotropic transverse harmonic trap.

The longitudinal direction is either free (homogeneous linear density) or
trapped within the local density approximation.  This is the model fitted
to the wings of measured profiles.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .bose import MIN_REDUCED_GAP
from .errors import DivergenceError, DomainError
from .units import LinearDensityProfile, ThermoState, TrapGeometry, local_chemical_potential, make_reduced_units

LADDER_REL_TOL = 1e-10


@dataclass(frozen=True)
class TransverseModeLadder:
    """Levels E_j = j + 1 (hbar omega_perp) with degeneracy j + 1, j = 0..j_max."""

    temperature: float
    j_max: int

    @classmethod
    def for_temperature(cls, temperature, rel_tol=LADDER_REL_TOL):
        return cls(temperature, kernels.ladder_cutoff(temperature, rel_tol))

    @property
    def energies(self):
        return np.arange(1, self.j_max + 2, dtype=float)

    @property
    def degeneracies(self):
        return np.arange(1, self.j_max + 2, dtype=float)

    def tail_bound(self):
        """Upper bound on the omitted part of the mode sum, relative to the j = 0 term.

        Uses g_{1/2}(z) <= z / (1 - z) and sums the geometric tail exactly.
        """
        u = math.exp(-1.0 / self.temperature)
        J = self.j_max + 1
        geometric = u**J * ((J + 1) - J * u) / (1 - u) ** 2
        # the fugacity of the first omitted level is below u**J for mu < 1
        return geometric / (1 - u**J)


def _check_mu(mu):
    mu = np.asarray(mu, dtype=float)
    if np.any(mu >= 1.0):
        raise DivergenceError(
            "ideal gas diverges for mu >= hbar*omega_perp (lowest transverse level)"
        )
    return mu


def ideal_linear_density_reduced(mu, temperature):
    """Linear density in atoms per a_perp at chemical potential ``mu`` (hbar omega_perp units)."""
    if temperature <= 0:
        raise DomainError("temperature must be positive")
    mu = _check_mu(mu)
    if np.any((1.0 - mu) / temperature < MIN_REDUCED_GAP):
        raise DomainError("mu too close to the lowest level for an accurate g_1/2")
    ladder = TransverseModeLadder.for_temperature(temperature)
    if ladder.tail_bound() > 1e-8:  # pragma: no cover - guards the cutoff rule
        raise DomainError("mode ladder truncation too coarse")
    total = kernels.ideal_ladder(mu, temperature, LADDER_REL_TOL)
    out = total / math.sqrt(2 * math.pi / temperature)
    return out if np.ndim(out) else float(out)


def ideal_linear_density(mu, temperature, geom: TrapGeometry = None):
    """Linear density n(mu, T) in atoms per metre.

    ``mu`` and ``temperature`` are in units of hbar*omega_perp (k_B T for the
    latter).  ``geom`` fixes the transverse length unit; the default trap is used
    when omitted.
    """
    units = make_reduced_units(geom or TrapGeometry())
    return units.linear_density_to_si(ideal_linear_density_reduced(mu, temperature))


def ideal_profile(state: ThermoState, geom: TrapGeometry, zgrid, pixel_size=None):
    """Ideal-gas LDA profile n(z) = n(mu0 - m omega_z^2 z^2 / 2, T) on ``zgrid`` (metres)."""
    z = np.asarray(zgrid, dtype=float)
    mu_z = local_chemical_potential(state, geom, z)
    n = ideal_linear_density(mu_z, state.temperature, geom)
    return LinearDensityProfile(z=z, n=np.asarray(n, dtype=float), pixel_size=pixel_size,
                                meta={"model": "ideal", "mu0": state.mu0, "T": state.temperature})


def classical_wing(state: ThermoState, geom: TrapGeometry, z):
    """Boltzmann-limit wing of the ideal profile, atoms per metre.

    n(z) ~ exp((mu0 - 1)/T) exp(-m omega_z^2 z^2 / 2 k_B T) / (Lambda (1 - exp(-1/T))^2).
    """
    units = make_reduced_units(geom)
    t = state.temperature
    lam = units.thermal_wavelength(t)
    n = (
        math.exp((state.mu0 - 1.0) / t)
        * np.exp(-units.trap_energy(np.asarray(z, dtype=float)) / t)
        / (lam * (1 - math.exp(-1.0 / t)) ** 2)
    )
    return units.linear_density_to_si(n)
