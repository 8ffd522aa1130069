"""Bose-Einstein special functions."""

import numpy as np

from . import kernels
from .errors import DomainError
from .units import ThermoState

# g_{1/2} is refused above this fugacity: every physical call site stays below it.
MAX_FUGACITY = 0.9999
MIN_REDUCED_GAP = -np.log(MAX_FUGACITY)


def polylog_half(z):
    """Polylogarithm g_{1/2}(z) = sum_k z^k / sqrt(k) on 0 <= z <= 0.9999.

    Accepts scalars or arrays.  Near z = 1 the series is replaced by the
    expansion in x = -ln z, sqrt(pi/x) + sum_k zeta(1/2-k) (-x)^k / k!,
    which is exact in that range.
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z_arr)) or np.any(z_arr < 0) or np.any(z_arr >= 1):
        raise DomainError("polylog_half is defined here only for 0 <= z < 1")
    if np.any(z_arr > MAX_FUGACITY):
        raise DomainError(
            f"fugacity above {MAX_FUGACITY}: g_1/2 diverges at z = 1 and is not evaluated there"
        )
    out = np.zeros_like(z_arr)
    pos = z_arr > 0
    if np.any(pos):
        out[pos] = kernels.g_half(-np.log(z_arr[pos]))
    return out if out.ndim else float(out)


def g_half_of_gap(x):
    """g_{1/2}(exp(-x)) for reduced gaps x = (E - mu)/T >= -ln(0.9999)."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < MIN_REDUCED_GAP):
        raise DomainError("level too close to (or below) the chemical potential for g_1/2")
    out = kernels.g_half(x_arr)
    return out if np.ndim(out) else float(out)


def bose_occupation(energy, state: ThermoState):
    """Mean occupation 1 / (exp((E - mu0)/T) - 1) of a level at ``energy``."""
    e = np.asarray(energy, dtype=float)
    if np.any(e <= state.mu0):
        raise DomainError("bose_occupation needs energy > mu0 (otherwise the level is unphysically ordered)")
    with np.errstate(over="ignore"):  # huge gaps give exactly zero occupation
        out = 1.0 / np.expm1((e - state.mu0) / state.temperature)
    return out if out.ndim else float(out)
