import math

import numpy as np
import pytest
from scipy.integrate import quad

from trapbose.basis import sector_basis
from trapbose.bogoliubov import (
    crossover_density,
    default_k_grid,
    density_fluctuation_integral,
    sectors_for,
    solve_bdg_modes,
    solve_transverse_gpe,
)
from trapbose.errors import BracketError, TruncationError, ValidationError

A = 5.24e-9
N_600 = 600 / 6e-6


def one_d_fluctuations(na, temperature):
    """Thermal (delta rho)^2 / rho of a strictly 1D Bogoliubov gas, reduced units."""
    gn = 2 * na

    def f(k):
        if k == 0:
            return temperature / gn
        e_k = 0.5 * k * k
        eps = math.sqrt(e_k * (e_k + 2 * gn))
        x = eps / temperature
        return 0.0 if x > 700 else 2 / math.expm1(x) * e_k / eps

    return quad(f, 0, 60, limit=400)[0] / math.pi


@pytest.fixture(scope="module")
def cond_600(geom):
    return solve_transverse_gpe(N_600, geom)


@pytest.fixture(scope="module")
def modes_600(cond_600):
    return solve_bdg_modes(cond_600, temperature=2.75)


def test_empty_condensate_is_oscillator_ground_state(geom):
    c = solve_transverse_gpe(0.0, geom)
    assert c.mu_gp == pytest.approx(1.0, abs=1e-8)
    expected = np.exp(-c.grid.r**2 / 2) / math.sqrt(math.pi)
    assert np.allclose(c.psi0, expected, atol=1e-8)


def test_gp_ground_state(cond_600):
    assert cond_600.residual < 1e-8
    assert cond_600.norm() == pytest.approx(1.0, abs=1e-10)
    inside = cond_600.grid.r < 5
    assert np.all(cond_600.psi0[inside] > 0)


@pytest.mark.parametrize("na", [0.01, 0.05, 0.2, 0.56, 1.0])
def test_gp_chemical_potential_tracks_eos(geom, na):
    c = solve_transverse_gpe(na / A, geom)
    assert c.mu_gp == pytest.approx(math.sqrt(1 + 4 * na), rel=0.05)


@pytest.mark.parametrize("na", [0.1, 0.5, 1.0])
def test_virial_chemical_potential(geom, units, na):
    # mu_gp = dE/dn with E = n <H0> + g n^2 int psi0^4 / 2
    def energy(n):
        c = solve_transverse_gpe(n, geom, reduced=True)
        bare = sector_basis(c.grid, 0, c.coeffs.size).bare[0]
        return n * float(c.coeffs @ (bare * c.coeffs)) + 0.5 * c.coupling * n**2 * c.grid.integrate(c.psi0**4)

    n = na / units.scattering_length
    h = 1e-4 * n
    slope = (energy(n + h) - energy(n - h)) / (2 * h)
    assert slope == pytest.approx(solve_transverse_gpe(n, geom, reduced=True).mu_gp, rel=0.01)


def test_negative_density_rejected(geom):
    with pytest.raises(ValidationError):
        solve_transverse_gpe(-1.0, geom)


def test_mode_normalisation(modes_600):
    assert modes_600.norm_error < 1e-6


def test_gapless_linear_phonon(modes_600):
    b = modes_600.branch()
    k = modes_600.k
    assert b[0] < 0.02
    slope = b[:3] / k[:3]
    assert np.all(slope > 0)
    assert np.allclose(slope, slope[0], rtol=0.02)


def test_branch_nondecreasing(modes_600):
    assert np.all(np.diff(modes_600.energies, axis=0) >= -1e-12)


@pytest.mark.parametrize("na", [0.01, 0.5, 1.0])
def test_free_particle_limit(geom, na):
    c = solve_transverse_gpe(na / A, geom)
    m = solve_bdg_modes(c, [math.sqrt(40.0)], (0, 3))
    assert m.branch()[0] / 20.0 == pytest.approx(1.0, rel=0.05)


def test_one_dimensional_dispersion(geom):
    na = 0.01
    c = solve_transverse_gpe(na / A, geom)
    k = np.geomspace(1e-3, 5.0, 60)
    m = solve_bdg_modes(c, k, (0, 2))
    e_k = 0.5 * k**2
    assert np.allclose(m.branch(), np.sqrt(e_k * (e_k + 4 * na)), rtol=0.05)


def test_fluctuations_vanish_at_zero_temperature(cond_600, modes_600):
    assert density_fluctuation_integral(cond_600, modes_600, 0.0) == 0.0


def test_fluctuations_grow_with_temperature(geom):
    c = solve_transverse_gpe(0.5 / A, geom)
    values = []
    for t in (0.5, 1.0, 2.0, 2.75, 4.0):
        m = solve_bdg_modes(c, temperature=t)
        values.append(density_fluctuation_integral(c, m, t))
    assert np.all(np.diff(values) > 0)


def test_one_dimensional_fluctuation_limit(geom):
    # T well below the transverse gap: only the lowest branch is populated
    for t, na, tol in [(0.2, 0.02, 0.1), (0.5, 0.1, 1.0)]:
        c = solve_transverse_gpe(na / A, geom)
        m = solve_bdg_modes(c, temperature=t)
        f = density_fluctuation_integral(c, m, t, reduced=True)
        assert f / one_d_fluctuations(na, t) == pytest.approx(1.0, abs=tol)


def test_transverse_branches_add_fluctuations(geom):
    c = solve_transverse_gpe(0.05 / A, geom)
    m = solve_bdg_modes(c, temperature=2.75)
    assert density_fluctuation_integral(c, m, 2.75, reduced=True) > one_d_fluctuations(0.05, 2.75)


def test_fluctuations_converged_under_doubling(cond_600, modes_600):
    f = density_fluctuation_integral(cond_600, modes_600, 2.75)
    k = default_k_grid(cond_600, 2.75, 400)
    k2 = np.geomspace(k[0], k[-1] * math.sqrt(2), 400)
    l_max, j, _ = sectors_for(cond_600, 2.75)
    m2 = solve_bdg_modes(cond_600, k2, (2 * l_max, 2 * j, 2 * j + 10))
    assert density_fluctuation_integral(cond_600, m2, 2.75) == pytest.approx(f, rel=0.02)


def test_short_k_grid_is_truncation(cond_600):
    m = solve_bdg_modes(cond_600, np.geomspace(1e-3, 1.0, 50), (2, 4))
    with pytest.raises(TruncationError):
        density_fluctuation_integral(cond_600, m, 2.75)


def test_missing_grid_arguments(cond_600):
    with pytest.raises(ValidationError):
        solve_bdg_modes(cond_600)


@pytest.mark.slow
def test_crossover_ordering(geom):
    hot = crossover_density(2.75, geom)
    cold = crossover_density(2.0, geom)
    assert cold.n_co_per_m < hot.n_co_per_m
    assert hot.ratio_monotone and cold.ratio_monotone
    assert hot.max_norm_error < 1e-6


def test_crossover_needs_a_bracket(geom):
    with pytest.raises(BracketError):
        crossover_density(2.75, geom, bracket=(1e4, 1e5))
    with pytest.raises(ValidationError):
        crossover_density(-1.0, geom)
