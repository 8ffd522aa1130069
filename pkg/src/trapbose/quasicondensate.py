"""Zero-temperature quasi-condensate equation of state and its LDA profile.

mu = hbar omega_perp sqrt(1 + 4 n a) interpolates between the 1D mean-field
regime (mu - 1 ~ 2 n a) and the transverse Thomas-Fermi regime.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .units import LinearDensityProfile, ThermoState, TrapGeometry, make_reduced_units


def eos_mu_of_n(n, geom: TrapGeometry = None):
    """Chemical potential (hbar omega_perp) of a homogeneous quasi-condensate; ``n`` in 1/m."""
    geom = geom or TrapGeometry()
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValidationError("linear density must be non-negative")
    out = np.sqrt(1.0 + 4.0 * n * geom.scattering_length)
    return float(out) if out.ndim == 0 else out


def eos_n_of_mu(mu, geom: TrapGeometry = None):
    """Inverse of :func:`eos_mu_of_n`; zero below the transverse zero-point energy."""
    geom = geom or TrapGeometry()
    mu = np.asarray(mu, dtype=float)
    out = np.where(mu > 1.0, (mu**2 - 1.0) / (4.0 * geom.scattering_length), 0.0)
    return float(out) if out.ndim == 0 else out


def quasicondensate_profile(zgrid, geom: TrapGeometry = None, peak_n=None, mu0=None, pixel_size=None):
    """LDA profile n(z) = n_eos(mu0 - m omega_z^2 z^2 / 2) on ``zgrid`` (metres).

    Exactly one of ``peak_n`` (1/m) or ``mu0`` (hbar omega_perp) is given.
    """
    if (peak_n is None) == (mu0 is None):
        raise ValidationError("give exactly one of peak_n and mu0")
    geom = geom or TrapGeometry()
    if peak_n is not None:
        mu0 = eos_mu_of_n(peak_n, geom)
    units = make_reduced_units(geom)
    z = np.asarray(zgrid, dtype=float)
    n = eos_n_of_mu(mu0 - units.trap_energy(z), geom)
    return LinearDensityProfile(z, np.atleast_1d(n), pixel_size,
                                meta={"model": "quasicondensate", "mu0": float(mu0)})


def thomas_fermi_half_length(mu0, geom: TrapGeometry = None):
    """z (metres) where mu0 - m omega_z^2 z^2 / 2 reaches the zero-point energy."""
    geom = geom or TrapGeometry()
    if mu0 <= 1.0:
        return 0.0
    units = make_reduced_units(geom)
    return float(units.length_to_si(np.sqrt(2.0 * (mu0 - 1.0)) / units.aspect_ratio))


def qc_profile_for_state(state: ThermoState, geom: TrapGeometry, zgrid, pixel_size=None):
    return quasicondensate_profile(zgrid, geom, mu0=state.mu0, pixel_size=pixel_size)
