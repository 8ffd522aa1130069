"""Checks of the local density approximation along the weak axis.

Each transverse Hartree-Fock mode (l, j) is assumed to follow the local
chemical potential adiabatically, giving the longitudinal potential

    V_{lj}(z) = E_{lj}(mu0 - eps^2 z^2 / 2) + eps^2 z^2 / 2,

with eps = omega_z / omega_perp and z in a_perp.  Diagonalising
p^2/2 + V_{lj}(z) yields the longitudinal level spacing that the effective
chemical potential is compared with, and the discrete-state profile that
replaces the LDA one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh

from .errors import SaturationError, ValidationError
from .hartree_fock import HFTable, tabulate_hf
from .units import LinearDensityProfile, ThermoState, TrapGeometry, make_reduced_units

STATE_WINDOW = 1.0  # exact longitudinal states below mu0 + STATE_WINDOW * T
GRID_SPACING = 0.8  # a_perp
GAP_MARGIN = 12.0  # grid for the gap reaches V0 - mu0 > GAP_MARGIN * T
GAP_POINTS = 2000
MODE_WINDOW = 10.0
N_GAUSS = 64


def sinc_dvr_kinetic(n_points, dz):
    """p^2/2 on a uniform grid in the sinc discrete-variable representation."""
    i = np.arange(n_points)
    d = i[:, None] - i[None, :]
    off = 2.0 * (-1.0) ** d / np.where(d == 0, 1, d) ** 2
    return np.where(d == 0, np.pi**2 / 3.0, off) / (2.0 * dz**2)


def longitudinal_spectrum(potential, dz, e_max=None, count=None):
    """Eigenpairs of p^2/2 + V on a uniform grid (a_perp, hbar omega_perp).

    Either every level below ``e_max`` or the lowest ``count`` levels.
    Eigenvectors are normalised to sum |psi|^2 = 1 over the nodes.
    """
    v = np.asarray(potential, dtype=float)
    h = sinc_dvr_kinetic(v.size, dz)
    h[np.diag_indices(v.size)] += v
    if count is not None:
        return eigh(h, subset_by_index=(0, count - 1), driver="evr")
    if e_max is None:
        raise ValidationError("give e_max or count")
    if e_max <= v.min():
        return np.empty(0), np.empty((v.size, 0))
    return eigh(h, subset_by_value=(v.min() - 1.0, e_max), driver="evr")


@dataclass(frozen=True, eq=False)
class EffectiveLongitudinalPotential:
    """V_{lj}(z) for a set of transverse modes; ``z`` in a_perp."""

    z: np.ndarray
    mu0: float
    temperature: float
    values: dict  # (l, j) -> array on z

    def __getitem__(self, mode):
        return self.values[mode]

    @property
    def modes(self):
        return list(self.values)

    @classmethod
    def from_table(cls, table: HFTable, state: ThermoState, geom: TrapGeometry, z, modes):
        eps = make_reduced_units(geom).aspect_ratio
        trap = 0.5 * eps**2 * np.asarray(z) ** 2
        mu_z = state.mu0 - trap
        values = {tuple(m): table.level(m[0], m[1], mu_z) + trap for m in modes}
        return cls(np.asarray(z), state.mu0, state.temperature, values)

    def is_even(self, rtol=1e-9):
        return all(np.allclose(v, v[::-1], rtol=rtol, atol=0) for v in self.values.values())

    def is_monotone(self, mode=(0, 0)):
        """V non-decreasing in |z| on both sides of the centre."""
        v = self.values[mode]
        c = int(np.argmin(np.abs(self.z)))
        return bool(np.all(np.diff(v[c:]) >= -1e-12) and np.all(np.diff(v[: c + 1]) <= 1e-12))


@dataclass
class LdaReport:
    mu0: float
    temperature: float
    ground_energy: float  # eps0, centre of the trap
    mu_eff: float
    delta_E: float
    ratio: float
    ground_state_population: float
    total_atoms: float
    ground_state_fraction: float
    aspect_ratio: float
    max_profile_deviation: float = None
    extra: dict = field(default_factory=dict)

    @property
    def delta_E_over_omega_z(self):
        return self.delta_E / self.aspect_ratio

    def as_dict(self):
        out = {
            "mu0": self.mu0,
            "T": self.temperature,
            "epsilon0": self.ground_energy,
            "mu_eff": self.mu_eff,
            "delta_E": self.delta_E,
            "delta_E_over_omega_z": self.delta_E_over_omega_z,
            "ratio": self.ratio,
            "N0": self.ground_state_population,
            "N_tot": self.total_atoms,
            "ground_state_fraction": self.ground_state_fraction,
        }
        if self.max_profile_deviation is not None:
            out["max_profile_deviation"] = self.max_profile_deviation
        out.update(self.extra)
        return out


def _table_for(state, geom, table, mu_top=None):
    top = state.mu0 if mu_top is None else max(mu_top, state.mu0)
    if table is None:
        return tabulate_hf(state.temperature, top, geom)
    if table.temperature != state.temperature:
        raise ValidationError("table temperature differs from the state's")
    if table.mu_max < state.mu0:
        raise ValidationError(f"table stops at mu = {table.mu_max}, below mu0 = {state.mu0}")
    return table


def total_atom_number(table: HFTable, state: ThermoState, geom: TrapGeometry):
    """int n_h(mu0 - eps^2 z^2 / 2) dz over the whole axis (atoms)."""
    eps = make_reduced_units(geom).aspect_ratio
    z_end = math.sqrt(2 * (state.mu0 + 30 * state.temperature + 5)) / eps
    val, _ = quad(lambda x: table.n_h(state.mu0 - 0.5 * eps**2 * x**2), 0.0, z_end, limit=400)
    return 2.0 * val


def lda_ratio(state: ThermoState, geom: TrapGeometry = None, table: HFTable = None, n_points=GAP_POINTS,
              margin=GAP_MARGIN):
    """|mu_eff| / Delta E and the ground-state population estimate at ``state``.

    Delta E is the gap of p^2/2 + V_00(z) between its two lowest levels.
    """
    geom = geom or TrapGeometry()
    table = _table_for(state, geom, table)
    eps = make_reduced_units(geom).aspect_ratio
    e0 = float(table.ground_energy(state.mu0))
    if e0 <= state.mu0:
        raise SaturationError("ground level below mu0 at the centre", mu=state.mu0, lowest_level=e0, z=0.0)
    # V_00 - mu0 ~ e0 - mu0 + eps^2 z^2 / 2 grows at least like the bare trap
    z_ext = math.sqrt(2 * (margin * state.temperature + max(state.mu0 - e0, 0.0) + 1.0)) / eps
    z = np.linspace(-z_ext, z_ext, int(n_points))
    pot = EffectiveLongitudinalPotential.from_table(table, state, geom, z, [(0, 0)])
    w, _ = longitudinal_spectrum(pot[(0, 0)], z[1] - z[0], count=2)
    delta = float(w[1] - w[0])
    mu_eff = state.mu0 - e0
    n0 = state.temperature / (e0 - state.mu0)
    n_tot = total_atom_number(table, state, geom)
    return LdaReport(mu0=state.mu0, temperature=state.temperature, ground_energy=e0, mu_eff=mu_eff,
                     delta_E=delta, ratio=abs(mu_eff) / delta, ground_state_population=n0,
                     total_atoms=n_tot, ground_state_fraction=n0 / n_tot, aspect_ratio=eps,
                     extra={"lowest_longitudinal_level": float(w[0])})


def scan_ratio(temperature, mu_values, geom: TrapGeometry = None, table: HFTable = None):
    """LdaReports for several mu0 from one table built up to max(mu_values)."""
    geom = geom or TrapGeometry()
    mu_values = [float(m) for m in mu_values]
    top = max(mu_values)
    table = table or tabulate_hf(temperature, top, geom)
    return [lda_ratio(ThermoState(m, temperature), geom, table) for m in mu_values]


def default_modes(table: HFTable, state: ThermoState, window=MODE_WINDOW):
    """Transverse modes with E(centre) - mu0 < window * T."""
    return table.modes_below(state.mu0 + window * state.temperature, state.mu0)


def beyond_lda_profile(state: ThermoState, geom: TrapGeometry, zgrid, table: HFTable = None, n_modes=None,
                       window=STATE_WINDOW, dz=GRID_SPACING, pixel_size=None):
    """Linear density from discrete longitudinal states of each transverse mode.

    States of p^2/2 + V_{lj} below E_c = mu0 + window T are summed exactly
    with Bose occupations at (mu0, T).  Above E_c the spectrum is dense and
    enters through its semiclassical density, which together with the modes
    outside the window is the LDA profile itself:

        n = n_LDA + sum_{lj} d_l [exact(E < E_c) - semiclassical(E < E_c)].

    ``zgrid`` is in metres; the returned profile is in atoms per metre.
    """
    geom = geom or TrapGeometry()
    table = _table_for(state, geom, table)
    units = make_reduced_units(geom)
    eps = units.aspect_ratio
    t, mu0 = state.temperature, state.mu0
    e_c = mu0 + window * t
    if n_modes is None:
        modes = table.modes_below(e_c, mu0)
    else:
        modes = default_modes(table, state)[: int(n_modes)]
    # box reaches a few hbar omega_perp beyond every classical turning point below E_c
    z_ext = math.sqrt(2 * (e_c - min(mu0, 1.0) + 4.0)) / eps
    z = np.arange(-z_ext, z_ext + dz / 2, dz)
    trap = 0.5 * eps**2 * z**2
    mu_z = mu0 - trap
    n_lda = table.n_h(mu_z)
    pot = EffectiveLongitudinalPotential.from_table(table, state, geom, z, modes)
    gl_x, gl_w = np.polynomial.legendre.leggauss(N_GAUSS)

    corr = np.zeros_like(z)
    occ_sum = 0.0
    exact_total = 0.0
    n_states = 0
    lowest = np.inf
    for l, j in modes:
        d = 1.0 if l == 0 else 2.0
        v = pot[(l, j)]
        w, vec = longitudinal_spectrum(v, dz, e_max=e_c)
        if w.size == 0:
            continue
        lowest = min(lowest, float(w[0]))
        if w[0] <= mu0:
            raise SaturationError(f"longitudinal level {w[0]:.6f} of mode ({l},{j}) at or below mu0",
                                  mu=mu0, lowest_level=float(w[0]))
        f = 1.0 / np.expm1((w - mu0) / t)
        exact = d * (vec**2 @ f) / dz
        occ_sum += d * float(np.sum(f))
        exact_total += float(np.sum(exact) * dz)
        n_states += w.size
        # semiclassical density of the same energy range: (d/pi) int_0^{p_c} n_B dp
        pc = np.sqrt(2.0 * np.maximum(e_c - v, 0.0))
        p = 0.5 * pc[:, None] * (gl_x[None, :] + 1.0)
        with np.errstate(over="ignore"):
            fs = 1.0 / np.expm1((0.5 * p**2 + v[:, None] - mu0) / t)
        semi = d / math.pi * (fs @ gl_w) * 0.5 * pc
        corr += exact - semi

    n_red = n_lda + corr
    z_out = np.asarray(zgrid, dtype=float)
    z_red = units.length_from_si(z_out)
    inside = np.abs(z_red) <= z[-1]
    n_out = np.where(inside, np.interp(z_red, z, n_red), table.n_h(mu0 - 0.5 * eps**2 * z_red**2))
    lda_out = table.n_h(mu0 - 0.5 * eps**2 * z_red**2)
    peak = float(np.max(lda_out))
    meta = {
        "model": "beyond_lda", "mu0": mu0, "T": t, "modes": [list(m) for m in modes],
        "state_cutoff": e_c, "n_states": n_states, "occupation_sum": occ_sum,
        "exact_part_total": exact_total, "lowest_level": lowest, "grid_spacing": dz,
        "max_deviation_over_peak": float(np.max(np.abs(n_out - lda_out)) / peak) if peak > 0 else 0.0,
    }
    return LinearDensityProfile(z_out, units.linear_density_to_si(n_out), pixel_size, meta=meta)
