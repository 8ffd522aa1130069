"""Acceptance criteria: one PASS/FAIL line per criterion, repeated in the terminal summary."""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from trapbose.bogoliubov import (
    crossover_density,
    default_k_grid,
    density_fluctuation_integral,
    sectors_for,
    solve_bdg_modes,
    solve_transverse_gpe,
)
from trapbose.cli import main
from trapbose.errors import ConvergenceError, SaturationError
from trapbose.hartree_fock import RadialDensity, hf_profile, make_solver
from trapbose.ideal import ideal_profile
from trapbose.imaging import CrossSection, calibrate_cross_section, ingest, synthesize_frames
from trapbose.lda import beyond_lda_profile, lda_ratio, scan_ratio
from trapbose.quasicondensate import eos_mu_of_n, eos_n_of_mu
from trapbose.units import ThermoState, pixel_grid

pytestmark = pytest.mark.slow

A = 5.24e-9
PIXEL = 6e-6


def record(number, title, passed, detail, elapsed=None):
    timing = f" [{elapsed:.0f} s]" if elapsed is not None else ""
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title}: {detail}{timing}"
    ACCEPTANCE[number] = (bool(passed), line)
    print(line)
    return passed


@pytest.fixture(autouse=True)
def _record_errors(request):
    yield
    number = int(request.node.name.split("_")[1])
    if number not in ACCEPTANCE:
        record(number, request.node.name, False, "raised before producing a result")


def test_01_ideal_limit(geom):
    t0 = time.perf_counter()
    z = pixel_grid(201, PIXEL)
    worst = 0.0
    for mu0, t in [(0.5, 2.75), (-2.0, 6.0)]:
        state = ThermoState(mu0, t)
        hf = hf_profile(state, geom, z, method="direct", coupling=0.0)
        ref = ideal_profile(state, geom, z)
        worst = max(worst, float(np.max(np.abs(hf.n / ref.n - 1))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 60
    assert record(1, "HF with g = 0 equals the ideal gas", ok, f"max relative difference {worst:.2e} (< 1e-6)",
                  elapsed)


def test_02_hot_cloud(geom):
    t0 = time.perf_counter()
    state = ThermoState(-2.0, 6.0)
    z = pixel_grid(201, PIXEL)
    hf = hf_profile(state, geom, z, method="direct")
    ref = ideal_profile(state, geom, z)
    dev = float(np.max(np.abs(hf.n - ref.n)) / ref.n.max())
    elapsed = time.perf_counter() - t0
    ok = dev < 0.01 and elapsed < 300
    assert record(2, "hot cloud HF vs ideal at (T=6, mu0=-2)", ok,
                  f"max |n_HF - n_ideal| / peak = {dev:.2%} (< 1%), peak {ref.n.max() * PIXEL:.0f} atoms/pixel",
                  elapsed)


def test_03_variational_quality():
    t0 = time.perf_counter()
    solver = make_solver(2.75, mu_max=2.0)
    _, rep = solver.solve_variational(1.65)
    elapsed = time.perf_counter() - t0
    ok = rep.xi < 1e-4 and rep.linear_density_mismatch < 0.005 and elapsed < 600
    assert record(3, "variational HF at (2.75, 1.65)", ok,
                  f"xi = {rep.xi:.2e} (< 1e-4), |n_h - n'_h|/n_h = {rep.linear_density_mismatch:.2%} (< 0.5%)",
                  elapsed)


def test_04_solver_cross_agreement():
    t0 = time.perf_counter()
    solver = make_solver(2.75, mu_max=2.0)
    worst, points = 0.0, 0
    for mu in np.linspace(0.0, 0.9, 10):
        _, it = solver.solve_iterative(float(mu))
        # independent start: one map application from rho = 0 (the ideal-gas density)
        seed, _ = solver.thermal_density(RadialDensity.zeros(solver.grid), float(mu))
        _, var = solver.solve_variational(float(mu), seed=seed)
        worst = max(worst, abs(var.n_h / it.n_h_prime - 1))
        points += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 0.01 and points == 10
    assert record(4, "iterative vs variational n_h", ok,
                  f"max relative difference {worst:.2%} over {points} mu in [0, 0.9] (< 1%)", elapsed)


def test_05_iterative_breakdown(units, table_275):
    t0 = time.perf_counter()
    solver = make_solver(2.75, mu_max=2.0)
    per_pixel = PIXEL / units.transverse_length_unit
    last_ok = failed_at = None
    for mu in np.arange(0.80, 1.30, 0.01):
        try:
            solver.solve_iterative(float(mu))
            last_ok = float(mu)
        except (ConvergenceError, SaturationError):
            failed_at = float(mu)
            break
    elapsed = time.perf_counter() - t0
    if failed_at is None:
        ok, detail = False, "cold-start iteration converged everywhere up to mu = 1.29"
    else:
        n_fail = float(table_275.n_h(failed_at)) * per_pixel
        n_ok = float(table_275.n_h(last_ok)) * per_pixel if last_ok is not None else math.nan
        ok = 160 <= n_fail <= 640
        detail = (f"last convergence at mu = {last_ok:.2f} ({n_ok:.0f} atoms/pixel), "
                  f"first failure at mu = {failed_at:.2f} ({n_fail:.0f} atoms/pixel, window [160, 640])")
    assert record(5, "iterative HF breakdown at T = 2.75", ok, detail, elapsed)


def test_06_lda_ratio(geom, table_275):
    t0 = time.perf_counter()
    rep = lda_ratio(ThermoState(1.65, 2.75), geom, table_275)
    scan = scan_ratio(2.75, np.linspace(-2.0, 2.0, 21), geom, table_275)
    lowest = min(r.ratio for r in scan)
    elapsed = time.perf_counter() - t0
    ok = abs(rep.ratio - 25) <= 7 and lowest > 15 and elapsed < 600
    assert record(6, "LDA ratio |mu_eff|/Delta E", ok,
                  f"{rep.ratio:.2f} at (2.75, 1.65) (25 +- 7); minimum {lowest:.2f} for mu0 in [-2, 2] (> 15)",
                  elapsed)


def test_07_ground_state_fraction(geom, table_275):
    rep = lda_ratio(ThermoState(1.65, 2.75), geom, table_275)
    frac = rep.ground_state_fraction
    ok = abs(frac - 0.0035) <= 0.0012
    assert record(7, "ground-state population", ok, f"N0/N_tot = {frac:.5f} (0.0035 +- 0.0012)")


def test_08_beyond_lda(geom, table_275):
    t0 = time.perf_counter()
    prof = beyond_lda_profile(ThermoState(1.65, 2.75), geom, pixel_grid(201, PIXEL), table_275)
    dev = prof.meta["max_deviation_over_peak"]
    elapsed = time.perf_counter() - t0
    assert record(8, "discrete-state profile vs LDA", dev < 0.05, f"max deviation {dev:.2%} of peak (< 5%)",
                  elapsed)


def test_09_eos_anchors(geom):
    exact = eos_mu_of_n(0.56 / A) == 1.8
    worst = 0.0
    for na in np.geomspace(0.01, 1.0, 15):
        c = solve_transverse_gpe(na / A, geom)
        worst = max(worst, abs(c.mu_gp / math.sqrt(1 + 4 * na) - 1))
    ok = exact and worst < 0.05
    assert record(9, "equation of state anchors", ok,
                  f"mu(na = 0.56) == 1.8 is {exact}; GP vs sqrt(1 + 4na) max {worst:.2%} for na in [0.01, 1] (< 5%)")


def test_10_bogoliubov(geom):
    t0 = time.perf_counter()
    checks = {}
    cond = solve_transverse_gpe(600 / PIXEL, geom)
    modes = solve_bdg_modes(cond, temperature=2.75)
    checks["normalisation"] = modes.norm_error < 1e-6
    b, k = modes.branch(), modes.k
    slope = b[:3] / k[:3]
    checks["gapless linear phonon"] = bool(b[0] < 0.02 and np.all(slope > 0) and np.ptp(slope) < 0.02 * slope[0])
    free = []
    for na in (0.01, 0.5, 1.0):
        c = solve_transverse_gpe(na / A, geom)
        free.append(solve_bdg_modes(c, [math.sqrt(40.0)], (0, 3)).branch()[0] / 20.0)
    checks["free-particle asymptote"] = max(abs(f - 1) for f in free) < 0.05
    c1 = solve_transverse_gpe(0.01 / A, geom)
    kk = np.geomspace(1e-3, 5.0, 60)
    e_k = 0.5 * kk**2
    one_d = solve_bdg_modes(c1, kk, (0, 2)).branch()
    # 2 g_1 n = 4 n a in units of hbar omega_perp
    disp = float(np.max(np.abs(one_d / np.sqrt(e_k * (e_k + 4 * 0.01)) - 1)))
    checks["1D dispersion"] = disp < 0.05
    f1 = density_fluctuation_integral(cond, modes, 2.75)
    kd = default_k_grid(cond, 2.75, 400)
    kd = np.geomspace(kd[0], kd[-1] * math.sqrt(2), 400)
    l_max, j, _ = sectors_for(cond, 2.75)
    f2 = density_fluctuation_integral(cond, solve_bdg_modes(cond, kd, (2 * l_max, 2 * j, 2 * j + 10)), 2.75)
    doubling = abs(f2 / f1 - 1)
    checks["doubling"] = doubling < 0.02
    rep = crossover_density(2.75, geom, rel_tol=0.01)
    width = rep.bracket_per_m[1] / rep.bracket_per_m[0] - 1
    checks["root to 1%"] = width <= 0.01
    # profile (b) peak: mu_qc = 1.8 hbar omega_perp through the equation of state
    peak_b = eos_n_of_mu(1.8, geom) * PIXEL
    checks["below profile-(b) peak"] = rep.n_co_atoms_per_pixel < peak_b
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 1800
    failed = [name for name, v in checks.items() if not v]
    detail = (f"norm error {modes.norm_error:.1e}, free ratio max dev {max(abs(f - 1) for f in free):.2%}, "
              f"1D dispersion dev {disp:.2%}, doubling {doubling:.2%}, "
              f"n_co(2.75) = {rep.n_co_atoms_per_pixel:.0f} atoms/pixel < {peak_b:.0f}"
              + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert record(10, "Bogoliubov properties", ok, detail, elapsed)


def test_11_thermometry_roundtrip(tmp_path):
    t0 = time.perf_counter()
    scenario = tmp_path / "ideal.scn"
    scenario.write_text("model = ideal\nT = 2.75\nmu0 = 0.5\nframes = 30\nscatter = 0.05\nn_pixels = 161\n")
    code = main(["--out-dir", str(tmp_path), "--seed", "0", "pipeline", "--scenario", str(scenario)])
    elapsed = time.perf_counter() - t0
    if code != 0:
        assert record(11, "thermometry roundtrip", False, f"pipeline exit code {code}", elapsed)
    rep = json.loads((tmp_path / "pipeline_report.json").read_text())
    t_err, mu_err = rep["relative_error"]["T"], rep["relative_error"]["mu0"]
    ok = abs(t_err) < 0.03 and abs(mu_err) < 0.05 and elapsed < 600
    assert record(11, "thermometry roundtrip (seed 0, 30 frames, 5% scatter)", ok,
                  f"T = {rep['recovered']['T']:.3f} ({t_err:+.1%}, within 3%), "
                  f"mu0 = {rep['recovered']['mu0']:.3f} ({mu_err:+.1%}, within 5%)", elapsed)


def test_12_imaging_roundtrip(geom):
    truth = ideal_profile(ThermoState(0.5, 2.75), geom, pixel_grid(161, PIXEL))
    back = ingest(*synthesize_frames(truth))
    err = float(np.max(np.abs(back.n - truth.n)) / truth.n.max())
    i1, i2 = synthesize_frames(truth, CrossSection(0.24))
    detuned = ingest(i1, i2, CrossSection.resonant_only()).meta["total_atoms"]
    factor = calibrate_cross_section(detuned, truth.total_atoms()).calibration_factor
    ok = err < 0.005 and abs(factor / 0.24 - 1) < 0.05
    assert record(12, "imaging roundtrip", ok,
                  f"noiseless profile error {err:.2e} of peak (< 0.5%), calibration {factor:.4f} (0.24 within 5%)")
