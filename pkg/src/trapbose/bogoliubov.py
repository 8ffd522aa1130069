"""Bogoliubov density fluctuations of a transversely trapped quasi-condensate.

The mean field is the Gross-Pitaevskii ground state of a longitudinally
uniform gas of linear density n,

    [-laplacian_perp / 2 + r^2 / 2 + g n psi0^2] psi0 = mu_gp psi0,

and its excitations carry a longitudinal wavevector k and an angular
momentum l.  Writing s = u + v and d = u - v, the Bogoliubov equations read

    A d = eps s,   B s = eps d,
    A = H_gp - mu_gp + k^2/2,   B = A + 2 g n psi0^2,

so eps^2 is an eigenvalue of A^(1/2) B A^(1/2).  Thermal fluctuations give

    F(n) = int (delta rho)^2 / rho0 d^2r
         = (1/2 pi) int dk sum_{l,j} d_l 2 n_B(eps) int |u + v|^2 d^2r,

and the cross-over density solves F(n) = n.  All quantities are reduced
(hbar omega_perp, a_perp) except where a function says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import sector_basis, sizes_for_cutoff
from .errors import BracketError, ConvergenceError, DomainError, TruncationError, ValidationError
from .units import DEFAULT_PIXEL_SIZE, RadialGrid, TrapGeometry, make_reduced_units

GP_BASIS = 40
GP_TOLERANCE = 1e-10
ENERGY_CUTOFF = 8.0  # modes kept below mu_gp + ENERGY_CUTOFF * T at k = 0
BASIS_PAD = 10
N_K = 200
K_COVERAGE = 15.0  # lowest branch reaches eps > K_COVERAGE * T at k_max
OCCUPATION_FLOOR = 1e-6
NORM_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class TransverseCondensate:
    """GP ground state at fixed linear density (reduced units inside)."""

    n: float  # atoms per a_perp
    mu_gp: float
    coeffs: np.ndarray  # l = 0 oscillator coefficients
    psi0: np.ndarray  # on grid.r
    grid: RadialGrid
    coupling: float
    residual: float
    iterations: int
    geom: TrapGeometry = field(default=None, repr=False)

    @property
    def n_per_m(self):
        return float(make_reduced_units(self.geom or TrapGeometry()).linear_density_to_si(self.n))

    @property
    def interaction(self):
        """g n psi0^2 on the grid."""
        return self.coupling * self.n * self.psi0**2

    def norm(self):
        return self.grid.integrate(self.psi0**2)


def solve_transverse_gpe(n, geom: TrapGeometry = None, grid: RadialGrid = None, n_basis=GP_BASIS,
                         tol=GP_TOLERANCE, max_iter=2000, reduced=False):
    """Transverse GP ground state at linear density ``n``.

    Self-consistent diagonalisation in the l = 0 oscillator basis with damped
    density mixing.  ``n`` is in atoms per metre unless ``reduced``.
    """
    geom = geom or TrapGeometry()
    units = make_reduced_units(geom)
    if not np.isfinite(n) or n < 0:
        raise ValidationError(f"linear density must be non-negative, got {n!r}")
    n_red = float(n) if reduced else float(units.linear_density_from_si(n))
    grid = grid or RadialGrid.gauss()
    basis = sector_basis(grid, 0, n_basis)
    g = units.dimensionless_coupling
    psi2 = basis.values[0, 0] ** 2
    mix = 0.5 if g * n_red < 2 else 0.2
    res = np.inf
    for it in range(1, max_iter + 1):
        energies, vecs = basis.diagonalize(g * n_red * psi2)
        c = vecs[0][:, 0]
        c = c * np.sign(c[0] if c[0] != 0 else 1.0)
        new = (c @ basis.values[0]) ** 2
        res = math.sqrt(grid.integrate((new - psi2) ** 2) / grid.integrate(psi2**2))
        if res < tol:
            psi2 = new
            break
        psi2 = (1 - mix) * psi2 + mix * new
    else:
        raise ConvergenceError(f"GP iteration stalled at residual {res:.2e}", last_iterate=psi2)
    # final consistent eigenpair and its residual norm |H psi - mu psi|
    energies, vecs = basis.diagonalize(g * n_red * psi2)
    c = vecs[0][:, 0]
    c = c * np.sign(c[0])
    psi0 = c @ basis.values[0]
    h = basis.potential_matrices(g * n_red * psi0**2)[0]
    h[np.diag_indices(n_basis)] += basis.bare[0]
    residual = float(np.linalg.norm(h @ c - energies[0, 0] * c))
    return TransverseCondensate(n=n_red, mu_gp=float(energies[0, 0]), coeffs=c, psi0=psi0, grid=grid,
                                coupling=g, residual=residual, iterations=it, geom=geom)


@dataclass(frozen=True, eq=False)
class BdGModeSet:
    """Bogoliubov modes on a k grid.

    ``energies`` and ``weights`` have shape (n_k, l_max + 1, n_modes);
    ``weights`` is int |u + v|^2 d^2r.  ``k`` is in 1/a_perp; ``k_si`` in 1/m.
    """

    k: np.ndarray
    energies: np.ndarray
    weights: np.ndarray
    degeneracy: np.ndarray
    norm_error: float
    k_min_extra: float  # weight of [0, k_min] taken from the first grid point
    condensate: TransverseCondensate = field(repr=False)
    u: np.ndarray = field(default=None, repr=False)  # coefficients (n_k, l, n_modes, n_basis)
    v: np.ndarray = field(default=None, repr=False)
    basis_size: tuple = (0, 0)

    @property
    def l_max(self):
        return self.energies.shape[1] - 1

    @property
    def n_modes(self):
        return self.energies.shape[2]

    @property
    def k_si(self):
        units = make_reduced_units(self.condensate.geom or TrapGeometry())
        return self.k / units.transverse_length_unit

    def branch(self, l=0, j=0):
        return self.energies[:, l, j]

    def mode_functions(self, ik, l, j):
        """u(r), v(r) on the condensate grid for mode (k[ik], l, j)."""
        if self.u is None:
            raise ValidationError("mode functions were not stored; use keep_functions=True")
        basis = sector_basis(self.condensate.grid, self.basis_size[0], self.basis_size[1])
        return self.u[ik, l, j] @ basis.values[l], self.v[ik, l, j] @ basis.values[l]


def default_k_grid(cond: TransverseCondensate, temperature, n_k=N_K, k_min=None):
    """Log grid from 2 pi / (10 L) to where free motion costs K_COVERAGE * T.

    L is the thermal half-length of the longitudinally trapped cloud, sqrt(2T)/eps_z.
    """
    geom = cond.geom or TrapGeometry()
    if k_min is None:
        length = math.sqrt(2 * temperature) / geom.aspect_ratio
        k_min = 2 * math.pi / (10 * length)
    k_max = 1.05 * math.sqrt(2 * K_COVERAGE * temperature)
    return np.geomspace(k_min, max(k_max, 2 * k_min), n_k)


def sectors_for(cond: TransverseCondensate, temperature, energy_cutoff=ENERGY_CUTOFF, pad=BASIS_PAD):
    """(l_max, n_modes, n_basis) covering transverse excitations below the cutoff."""
    e_max = cond.mu_gp + energy_cutoff * temperature
    l_max, n_basis = sizes_for_cutoff(e_max, pad=pad)
    return l_max, n_basis - pad, n_basis


def solve_bdg_modes(cond: TransverseCondensate, kgrid=None, sectors=None, temperature=None,
                    keep_functions=False):
    """Bogoliubov spectrum and density weights at each k.

    ``sectors`` is (l_max, n_modes) or (l_max, n_modes, n_basis); by default
    it follows from an energy cutoff at ``temperature``.  ``kgrid`` is in
    1/a_perp.
    """
    if sectors is None:
        if temperature is None:
            raise ValidationError("give either sectors or a temperature")
        sectors = sectors_for(cond, temperature)
    if len(sectors) == 2:
        sectors = (sectors[0], sectors[1], sectors[1] + BASIS_PAD)
    l_max, n_modes, n_basis = (int(s) for s in sectors)
    if kgrid is None:
        if temperature is None:
            raise ValidationError("give either kgrid or a temperature")
        kgrid = default_k_grid(cond, temperature)
    kgrid = np.asarray(kgrid, dtype=float)
    if kgrid.ndim != 1 or np.any(kgrid <= 0) or np.any(np.diff(kgrid) <= 0):
        raise ValidationError("k grid must be positive and increasing")

    basis = sector_basis(cond.grid, l_max, n_basis)
    pot = basis.potential_matrices(cond.interaction)
    idx = np.arange(n_basis)
    a_mat = pot.copy()
    a_mat[:, idx, idx] += basis.bare - cond.mu_gp
    a0, rot = np.linalg.eigh(a_mat)
    # the condensate itself is the zero mode of A at k = 0
    if a0.min() < -1e-6:
        raise DomainError(f"H_gp - mu_gp has a negative eigenvalue {a0.min():.3e}; the GP state is not the ground state")
    a0 = np.maximum(a0, 0.0)
    # B - A = 2 g n psi0^2, rotated into the eigenbasis of A at k = 0
    b_rot = a_mat + 2 * pot
    b_rot = np.matmul(np.matmul(rot.transpose(0, 2, 1), b_rot), rot)

    nk = kgrid.size
    energies = np.empty((nk, l_max + 1, n_modes))
    weights = np.empty_like(energies)
    u = v = None
    if keep_functions:
        u = np.empty((nk, l_max + 1, n_modes, n_basis))
        v = np.empty_like(u)
    norm_err = 0.0
    eye = np.eye(n_basis)
    for ik, k in enumerate(kgrid):
        kap = 0.5 * k * k
        diag_a = a0 + kap
        sq = np.sqrt(diag_a)
        b_k = b_rot + kap * eye
        sym = sq[:, :, None] * b_k * sq[:, None, :]
        e2, y = np.linalg.eigh(sym)
        if e2[:, :n_modes].min() <= 0:
            bad = np.unravel_index(np.argmin(e2[:, :n_modes]), e2[:, :n_modes].shape)
            raise DomainError(f"non-positive Bogoliubov energy^2 {e2[bad]:.3e} at k={k:.4g}, l={bad[0]}, j={bad[1]}")
        eps = np.sqrt(e2[:, :n_modes])
        y = y[:, :, :n_modes] / np.sqrt(eps)[:, None, :]  # |y|^2 = 1/eps
        s = sq[:, :, None] * y
        d = np.matmul(b_k, s) / eps[:, None, :]
        norm = np.einsum("lim,lim->lm", s, d)
        norm_err = max(norm_err, float(np.max(np.abs(norm - 1.0))))
        energies[ik] = eps
        weights[ik] = np.einsum("lim,lim->lm", s, s)
        if keep_functions:
            s_b = np.matmul(rot, s)
            d_b = np.matmul(rot, d)
            u[ik] = (0.5 * (s_b + d_b)).transpose(0, 2, 1)
            v[ik] = (0.5 * (s_b - d_b)).transpose(0, 2, 1)
    return BdGModeSet(k=kgrid, energies=energies, weights=weights, degeneracy=basis.degeneracy,
                      norm_error=norm_err, k_min_extra=float(kgrid[0]), condensate=cond, u=u, v=v,
                      basis_size=(l_max, n_basis))


def _occupation(eps, temperature):
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(eps / temperature)


def density_fluctuation_integral(cond: TransverseCondensate, modes: BdGModeSet, temperature,
                                 check_coverage=True, reduced=False):
    """F = int (delta rho)^2 / rho0 d^2r from thermal Bogoliubov occupations.

    Only the thermal part 2 n_B(eps) is kept and quasiparticles are
    counted at zero chemical potential.  Returns atoms per metre, or per
    a_perp if ``reduced``.
    """
    if temperature <= 0:
        return 0.0
    k = modes.k
    nb_last = _occupation(modes.energies[-1, 0, 0], temperature)
    if check_coverage and nb_last > OCCUPATION_FLOOR:
        # the lowest branch is roughly free at large k: tail of 2 n_B over k
        tail = float(np.sum(modes.degeneracy[:, None] * 2 * _occupation(modes.energies[-1], temperature))
                     * temperature / (k[-1] * math.pi))
        raise TruncationError(f"k grid ends with occupation {nb_last:.2e} on the lowest branch; "
                              f"estimated missing F ~ {tail:.3e} per a_perp")
    occ = 2 * _occupation(modes.energies, temperature) * modes.weights
    integrand = np.einsum("l,klm->k", modes.degeneracy, occ)
    # int_0^inf dk f = int f k dlog k over the grid plus f(k_min) k_min below it
    inner = np.trapezoid(integrand * k, np.log(k)) + integrand[0] * modes.k_min_extra
    value = inner / math.pi  # (1/2 pi) over both signs of k
    if reduced:
        return float(value)
    units = make_reduced_units(cond.geom or TrapGeometry())
    return float(units.linear_density_to_si(value))


@dataclass
class CrossoverReport:
    """Result of the F(n) = n root search at one temperature."""

    temperature: float
    n_co_per_m: float
    n_co_atoms_per_pixel: float
    pixel_size: float
    iterations: int
    bracket_per_m: tuple
    scan: list  # (n per m, F/n) pairs visited
    ratio_monotone: bool
    max_norm_error: float
    sectors: tuple
    n_k: int
    convention: str = "thermal-only fluctuations (2 n_B), quasiparticle chemical potential 0"

    def as_dict(self):
        return {
            "temperature": self.temperature,
            "n_co_per_m": self.n_co_per_m,
            "n_co_atoms_per_pixel": self.n_co_atoms_per_pixel,
            "pixel_size_m": self.pixel_size,
            "iterations": self.iterations,
            "bracket_per_m": list(self.bracket_per_m),
            "F_over_n_scan": [list(p) for p in self.scan],
            "F_over_n_monotone": self.ratio_monotone,
            "max_norm_error": self.max_norm_error,
            "sectors": list(self.sectors),
            "n_k": self.n_k,
            "convention": self.convention,
        }


def fluctuation_ratio(n_per_m, temperature, geom: TrapGeometry = None, energy_cutoff=ENERGY_CUTOFF,
                      n_k=N_K, details=False):
    """F(n) / n at linear density ``n_per_m``."""
    geom = geom or TrapGeometry()
    cond = solve_transverse_gpe(n_per_m, geom)
    sectors = sectors_for(cond, temperature, energy_cutoff)
    modes = solve_bdg_modes(cond, default_k_grid(cond, temperature, n_k), sectors)
    f = density_fluctuation_integral(cond, modes, temperature)
    ratio = f / n_per_m
    if details:
        return ratio, modes
    return ratio


def crossover_density(temperature, geom: TrapGeometry = None, bracket=(1e4, 1e9), rel_tol=0.01,
                      pixel_size=DEFAULT_PIXEL_SIZE, energy_cutoff=ENERGY_CUTOFF, n_k=N_K):
    """Linear density (1/m) where the Bogoliubov fluctuation integral equals n.

    Bisection on log n; F/n falls with n so the root is unique when bracketed.
    """
    if not (np.isfinite(temperature) and temperature > 0):
        raise ValidationError("temperature must be positive")
    geom = geom or TrapGeometry()
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi:
        raise ValidationError("bracket must be 0 < lo < hi")
    scan = []
    norm_err = 0.0
    sectors = None

    def g(n):
        nonlocal norm_err, sectors
        ratio, modes = fluctuation_ratio(n, temperature, geom, energy_cutoff, n_k, details=True)
        norm_err = max(norm_err, modes.norm_error)
        sectors = (modes.l_max, modes.n_modes)
        scan.append((n, ratio))
        return math.log(ratio)

    g_lo, g_hi = g(lo), g(hi)
    if g_lo * g_hi > 0:
        raise BracketError(f"F(n) - n does not change sign on [{lo:.3g}, {hi:.3g}] 1/m "
                           f"(F/n = {math.exp(g_lo):.3g}, {math.exp(g_hi):.3g})")
    it = 0
    # stop when the bracket is narrower than rel_tol in relative terms
    while hi / lo - 1 > rel_tol:
        mid = math.sqrt(lo * hi)
        g_mid = g(mid)
        it += 1
        if g_mid == 0:
            lo = hi = mid
            break
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    n_co = math.sqrt(lo * hi)
    ordered = sorted(scan)
    ratios = [r for _, r in ordered]
    monotone = all(b <= a for a, b in zip(ratios, ratios[1:]))
    return CrossoverReport(temperature=float(temperature), n_co_per_m=n_co,
                           n_co_atoms_per_pixel=n_co * pixel_size, pixel_size=pixel_size, iterations=it,
                           bracket_per_m=(lo, hi), scan=ordered, ratio_monotone=monotone,
                           max_norm_error=norm_err, sectors=sectors, n_k=n_k)
