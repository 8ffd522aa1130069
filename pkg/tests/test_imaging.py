import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapbose.errors import CalibrationError, DataError, QualityWarning
from trapbose.imaging import (
    CrossSection,
    ImageFrame,
    NoiseModel,
    atoms_per_pixel,
    calibrate_cross_section,
    deposit,
    gaussian_column_weights,
    ingest,
    linear_profile,
    photons_for_scatter,
    read_pgm,
    synthesize_frames,
    write_pgm,
)
from trapbose.ideal import ideal_profile
from trapbose.quasicondensate import quasicondensate_profile
from trapbose.units import LinearDensityProfile, ThermoState, pixel_grid

# (6 um)^2 / (0.24 * 3 lambda^2 / 2 pi) with lambda = 780.24 nm: atoms in a pixel with OD 1
N_OD_ONE = 516.0519818743777


@pytest.fixture(scope="module")
def ideal_05(geom):
    return ideal_profile(ThermoState(0.5, 2.75), geom, pixel_grid(81))


def test_single_pixel_count():
    n = atoms_per_pixel(np.array([[1.0]]), np.array([[math.e]]))
    assert n[0, 0] == pytest.approx(N_OD_ONE, rel=1e-12)


def test_equal_intensities_give_zero():
    i = np.full((5, 7), 1234.5)
    assert np.array_equal(atoms_per_pixel(i, i), np.zeros((5, 7)))


def test_doubling_sigma_halves_counts():
    rng = np.random.default_rng(3)
    i2 = rng.uniform(900, 1100, (4, 6))
    i1 = i2 * rng.uniform(0.2, 0.9, (4, 6))
    n1 = atoms_per_pixel(i1, i2, CrossSection(0.2))
    n2 = atoms_per_pixel(i1, i2, CrossSection(0.4))
    assert np.allclose(n2, 0.5 * n1, rtol=1e-14)


def test_bad_pixel_is_named():
    i1 = np.ones((3, 4))
    i1[2, 1] = 0.0
    with pytest.raises(DataError, match=r"row 2, column 1"):
        atoms_per_pixel(i1, np.ones((3, 4)))
    with pytest.raises(DataError):
        atoms_per_pixel(np.ones((3, 4)), np.ones((4, 3)))


def test_negative_counts_are_kept():
    n = atoms_per_pixel(np.array([[2.0]]), np.array([[1.0]]))
    assert n[0, 0] < 0


def test_uniform_matrix_profile():
    p = linear_profile(np.full((10, 20), 3.0), 6e-6)
    assert np.allclose(p.n, 30.0 / 6e-6)
    assert p.meta["total_atoms"] == pytest.approx(600.0)


def test_profile_axis_transpose():
    counts = np.random.default_rng(0).uniform(0, 5, (7, 11))
    a = linear_profile(counts, axis=0)
    b = linear_profile(counts.T, axis=1)
    assert np.allclose(a.n, b.n)


@given(st.integers(min_value=5, max_value=41), st.floats(min_value=0.3, max_value=3.0))
def test_column_weights_normalised(n_rows, width):
    w = gaussian_column_weights(n_rows, width)
    assert w.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(w, w[::-1])


def test_gaussian_deposit_preserves_columns(ideal_05):
    counts = deposit(ideal_05, n_rows=21, width_pixels=1.5)
    assert np.allclose(counts.sum(axis=0), ideal_05.n * 6e-6, rtol=0.01)


def test_cross_section_validation():
    assert CrossSection().calibration_factor == 0.24
    with pytest.raises(CalibrationError):
        CrossSection(0.0)
    with pytest.raises(CalibrationError):
        CrossSection(1.5)


def test_calibration_from_totals():
    assert calibrate_cross_section(5e4, 5e4).calibration_factor == pytest.approx(1.0)
    assert calibrate_cross_section(0.24 * 8e4, 8e4).calibration_factor == pytest.approx(0.24, rel=1e-12)
    with pytest.raises(CalibrationError):
        calibrate_cross_section(2e4, 1e4)
    with pytest.raises(CalibrationError):
        calibrate_cross_section(0.0, 1e4)


def test_injected_calibration_recovered(ideal_05):
    # image with the true cross-section, count with the resonant one
    i1, i2 = synthesize_frames(ideal_05, CrossSection(0.24))
    detuned = ingest(i1, i2, CrossSection.resonant_only()).meta["total_atoms"]
    tof = ideal_05.total_atoms()
    assert calibrate_cross_section(detuned, tof).calibration_factor == pytest.approx(0.24, rel=1e-3)


def test_noiseless_roundtrip(ideal_05):
    i1, i2 = synthesize_frames(ideal_05)
    back = ingest(i1, i2)
    assert np.max(np.abs(back.n - ideal_05.n)) < 0.005 * ideal_05.n.max()


def test_zero_profile_transmits_everything():
    z = pixel_grid(11)
    i1, i2 = synthesize_frames(LinearDensityProfile(z, np.zeros(11), 6e-6))
    assert np.array_equal(i1.intensity, i2.intensity)


def test_dense_cloud_warns(geom):
    p = quasicondensate_profile(pixel_grid(21), geom, mu0=3.0)
    with pytest.warns(QualityWarning):
        _, i2 = synthesize_frames(p, CrossSection.resonant_only(), width_pixels=0.5)
    assert i2.meta["saturation_warning"]


def test_supersampling_underestimates_dense_clouds(geom):
    p = quasicondensate_profile(pixel_grid(21), geom, mu0=1.8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QualityWarning)
        i1, i2 = synthesize_frames(p, width_pixels=0.5, supersample=True)
    back = ingest(i1, i2)
    assert back.n[10] < p.n[10]


def test_shot_noise_conserves_counts_on_average(ideal_05):
    noise = NoiseModel(photons=1e5, seed=5)
    totals = []
    for k in range(50):
        i1, i2 = synthesize_frames(ideal_05, noise=noise, frame_index=k)
        totals.append(ingest(i1, i2).meta["total_atoms"])
    stderr = np.std(totals) / math.sqrt(len(totals))
    assert abs(np.mean(totals) - ideal_05.total_atoms()) < 4 * stderr
    assert np.mean(totals) == pytest.approx(ideal_05.total_atoms(), rel=0.01)


def test_noise_is_seeded(ideal_05):
    a = synthesize_frames(ideal_05, noise=NoiseModel(seed=7), frame_index=2)[0].intensity
    b = synthesize_frames(ideal_05, noise=NoiseModel(seed=7), frame_index=2)[0].intensity
    c = synthesize_frames(ideal_05, noise=NoiseModel(seed=8), frame_index=2)[0].intensity
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_photons_for_scatter(ideal_05):
    level = photons_for_scatter(ideal_05, target=0.05)
    noise = NoiseModel(photons=level, seed=11)
    peak = int(np.argmax(ideal_05.n))
    samples = [ingest(*synthesize_frames(ideal_05, noise=noise, frame_index=k)).n[peak] for k in range(200)]
    rel = np.std(samples) / ideal_05.n[peak]
    assert rel == pytest.approx(0.05, rel=0.2)


def test_typical_peak_optical_density(geom):
    # a cloud on the scale of the dense profile at (1.65, 2.75), imaged at resonance
    p = quasicondensate_profile(pixel_grid(21), geom, peak_n=600 / 6e-6)
    _, i2 = synthesize_frames(p, CrossSection.resonant_only(), width_pixels=1.0)
    assert 1.0 < i2.meta["peak_od"] < 3.0


@settings(max_examples=10, deadline=None)
@given(st.booleans())
def test_pgm_roundtrip(tmp_path_factory, binary):
    rng = np.random.default_rng(1)
    frame = ImageFrame(rng.integers(1, 60000, (6, 9)).astype(float), 6e-6, "without_atoms", {"seed": 3})
    path = tmp_path_factory.mktemp("pgm") / "f.pgm"
    write_pgm(path, frame, binary=binary)
    back = read_pgm(path)
    assert np.array_equal(back.intensity, frame.intensity)
    assert back.role == "without_atoms"
    assert back.pixel_size == 6e-6
    assert back.meta["seed"] == 3


def test_pgm_errors(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P6\n2 2\n255\n0000")
    with pytest.raises(DataError):
        read_pgm(bad)
    short = tmp_path / "short.pgm"
    short.write_bytes(b"P5\n4 4\n65535\n\x00\x01")
    with pytest.raises(DataError):
        read_pgm(short)
    with pytest.raises(DataError):
        write_pgm(tmp_path / "x.pgm", ImageFrame(np.full((2, 2), 7e4)))
