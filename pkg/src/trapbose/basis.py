"""2D harmonic-oscillator basis, one block per angular-momentum sector.

Radial functions (normalised with the 2 pi r dr measure)

    R_{j,l}(r) = sqrt(j! / (pi (j+l)!)) r^l exp(-r^2/2) L_j^l(r^2)

have bare energies 2j + l + 1.  Any radially symmetric potential is
diagonalised sector by sector in this basis, so the bare spectrum is exact
and only the potential matrix elements carry quadrature error.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .units import RadialGrid


def radial_oscillator_functions(l, n_funcs, s):
    """Values of R_{j,l} for j < n_funcs at points s = r^2; shape (n_funcs, len(s)).

    Built from the three-term recurrence of the normalised Laguerre
    functions, which stays finite for large l and j.
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros((n_funcs, s.size))
    with np.errstate(divide="ignore"):
        log_s = np.log(s)
    log_f0 = 0.5 * l * log_s - 0.5 * s - 0.5 * gammaln(l + 1) - 0.5 * math.log(math.pi)
    if l == 0:
        log_f0 = -0.5 * s - 0.5 * math.log(math.pi)
    out[0] = np.exp(log_f0)
    if n_funcs > 1:
        out[1] = (1 + l - s) * out[0] / math.sqrt(1 + l)
    for j in range(1, n_funcs - 1):
        out[j + 1] = (
            (2 * j + 1 + l - s) * out[j] - math.sqrt(j * (j + l)) * out[j - 1]
        ) / math.sqrt((j + 1) * (j + 1 + l))
    return out


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Oscillator functions for sectors l = 0..l_max, n_basis radial functions each."""

    grid: RadialGrid
    l_max: int
    n_basis: int
    values: np.ndarray  # (l_max+1, n_basis, n_nodes)
    bare: np.ndarray  # (l_max+1, n_basis)

    @property
    def degeneracy(self):
        """1 for l = 0, 2 for l > 0 (the +l and -l sectors)."""
        d = np.full(self.l_max + 1, 2.0)
        d[0] = 1.0
        return d

    def potential_matrices(self, potential):
        """<j l| V |j' l> for every sector; shape (l_max+1, n_basis, n_basis)."""
        weighted = self.values * (np.asarray(potential) * self.grid.weights)
        return np.matmul(weighted, self.values.transpose(0, 2, 1))

    def diagonalize(self, potential, extra=None):
        """Eigenpairs of bare + V (+ ``extra`` matrices) per sector.

        Returns energies (l_max+1, n_basis), ascending per sector, and
        eigenvector coefficients (l_max+1, n_basis, n_basis) with
        eigenvectors in columns.
        """
        h = self.potential_matrices(potential)
        if extra is not None:
            h = h + extra
        idx = np.arange(self.n_basis)
        h[:, idx, idx] += self.bare
        return np.linalg.eigh(h)

    def wavefunctions(self, coeffs):
        """Radial eigenfunctions on the grid; shape (l_max+1, n_states, n_nodes)."""
        return np.matmul(coeffs.transpose(0, 2, 1), self.values)


@functools.lru_cache(maxsize=16)
def _cached_basis(n_points, r_max, l_max, n_basis):
    grid = RadialGrid.gauss(n_points, r_max)
    vals = np.stack([radial_oscillator_functions(l, n_basis, grid.s) for l in range(l_max + 1)])
    vals.setflags(write=False)
    bare = (2 * np.arange(n_basis)[None, :] + np.arange(l_max + 1)[:, None] + 1).astype(float)
    return SectorBasis(grid=grid, l_max=l_max, n_basis=n_basis, values=vals, bare=bare)


def sector_basis(grid: RadialGrid, l_max, n_basis):
    """Cached basis on a Gauss grid (grids built by :meth:`RadialGrid.gauss` only)."""
    return _cached_basis(grid.r.size, grid.r_max, int(l_max), int(n_basis))


def sizes_for_cutoff(e_max, pad=12):
    """(l_max, n_basis) so every bare level below ``e_max`` is inside the basis."""
    l_max = max(int(math.floor(e_max - 1.0)), 0)
    n_radial = max(int(math.floor((e_max - 1.0) / 2.0)) + 1, 1)
    return l_max, n_radial + pad
