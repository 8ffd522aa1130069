"""Absorption images: atom counting, cross-section calibration, synthetic frames.

A pixel of side Delta that transmits I1 of an incident I2 holds

    N = (Delta^2 / sigma_eff) ln(I2 / I1)

atoms.  Frames are 2D arrays with the transverse direction along axis 0 and
z along axis 1 unless an ``axis`` argument says otherwise.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import CalibrationError, DataError, QualityWarning, ValidationError
from .units import DEFAULT_PIXEL_SIZE, RB87_D2_WAVELENGTH, LinearDensityProfile, pixel_grid

log = logging.getLogger(__name__)

DEFAULT_CALIBRATION = 0.24
OD_WARN = 4.0
SUPERSAMPLE = 8
PGM_MAXVAL = 65535


def resonant_cross_section(wavelength=RB87_D2_WAVELENGTH):
    """3 lambda^2 / 2 pi, the two-level resonant cross-section (m^2)."""
    return 3.0 * wavelength**2 / (2.0 * math.pi)


@dataclass(frozen=True)
class CrossSection:
    calibration_factor: float = DEFAULT_CALIBRATION
    wavelength: float = RB87_D2_WAVELENGTH

    def __post_init__(self):
        if not (0.0 < self.calibration_factor <= 1.0):
            raise CalibrationError(f"calibration factor must lie in (0, 1], got {self.calibration_factor!r}")

    @property
    def resonant(self):
        return resonant_cross_section(self.wavelength)

    @property
    def sigma_eff(self):
        return self.calibration_factor * self.resonant

    @classmethod
    def resonant_only(cls, wavelength=RB87_D2_WAVELENGTH):
        return cls(1.0, wavelength)


@dataclass(frozen=True, eq=False)
class ImageFrame:
    """One camera frame; ``role`` is "with_atoms" (I1) or "without_atoms" (I2)."""

    intensity: np.ndarray
    pixel_size: float = DEFAULT_PIXEL_SIZE
    role: str = "with_atoms"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.intensity, dtype=float)
        if data.ndim != 2:
            raise DataError("an image frame must be two-dimensional")
        if self.role not in ("with_atoms", "without_atoms"):
            raise ValidationError(f"unknown frame role {self.role!r}")
        object.__setattr__(self, "intensity", data)

    @property
    def shape(self):
        return self.intensity.shape


def _intensities(i1, i2):
    a = i1.intensity if isinstance(i1, ImageFrame) else np.asarray(i1, dtype=float)
    b = i2.intensity if isinstance(i2, ImageFrame) else np.asarray(i2, dtype=float)
    if a.shape != b.shape:
        raise DataError(f"frame shapes differ: {a.shape} vs {b.shape}")
    for name, arr in (("I1", a), ("I2", b)):
        bad = np.argwhere(~(arr > 0))
        if bad.size:
            r, c = bad[0]
            raise DataError(f"non-positive intensity in {name} at pixel (row {r}, column {c}): {arr[r, c]!r}")
    return a, b


def atoms_per_pixel(i1, i2, sigma: CrossSection = None, pixel_size=None):
    """Atom number in every pixel; negative values from noise are kept."""
    sigma = sigma or CrossSection()
    if pixel_size is None:
        pixel_size = i1.pixel_size if isinstance(i1, ImageFrame) else DEFAULT_PIXEL_SIZE
    a, b = _intensities(i1, i2)
    counts = (pixel_size**2 / sigma.sigma_eff) * np.log(b / a)
    n_neg = int(np.count_nonzero(counts < 0))
    if n_neg:
        log.info("%d pixels with negative atom number (kept)", n_neg)
    return counts


def linear_profile(counts, pixel_size=DEFAULT_PIXEL_SIZE, axis=0, meta=None):
    """Sum over the transverse ``axis``; n(z) = column total / pixel size (atoms per metre)."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2:
        raise DataError("count matrix must be two-dimensional")
    column = counts.sum(axis=axis)
    info = {"negative_pixels": int(np.count_nonzero(counts < 0)), "total_atoms": float(column.sum())}
    info.update(meta or {})
    return LinearDensityProfile(pixel_grid(column.size, pixel_size), column / pixel_size, pixel_size, meta=info)


def ingest(i1, i2, sigma: CrossSection = None, pixel_size=None, axis=0):
    """Frame pair -> linear density profile."""
    if pixel_size is None:
        pixel_size = i1.pixel_size if isinstance(i1, ImageFrame) else DEFAULT_PIXEL_SIZE
    sigma = sigma or CrossSection()
    counts = atoms_per_pixel(i1, i2, sigma, pixel_size)
    return linear_profile(counts, pixel_size, axis, meta={"calibration_factor": sigma.calibration_factor})


def calibrate_cross_section(detuned_total, resonant_tof_total, wavelength=RB87_D2_WAVELENGTH):
    """Calibration factor from the same atom number imaged two ways.

    ``detuned_total`` is the in-situ total computed with the resonant
    cross-section; ``resonant_tof_total`` the time-of-flight total, where
    the resonant cross-section holds.
    """
    if not (detuned_total > 0 and resonant_tof_total > 0):
        raise CalibrationError("both totals must be positive")
    factor = detuned_total / resonant_tof_total
    if not 0 < factor <= 1:
        raise CalibrationError(f"calibration factor {factor:.4g} outside (0, 1]")
    return CrossSection(factor, wavelength)


@dataclass(frozen=True)
class NoiseModel:
    """Photon shot noise and per-frame intensity drift.

    ``photons`` is the mean count of the unabsorbed beam per pixel; shot
    noise has variance equal to the count.  ``drift`` is the rms relative
    mismatch of overall intensity between I1 and I2.
    """

    photons: float = 3.0e4
    shot_noise: bool = True
    drift: float = 0.0
    seed: int = 0

    def rng(self, frame_index=0):
        return np.random.default_rng(np.random.SeedSequence([int(self.seed), int(frame_index)]))

    def apply(self, i1, i2, frame_index=0):
        rng = self.rng(frame_index)
        if self.drift:
            i1 = i1 * (1.0 + self.drift * rng.standard_normal())
        if self.shot_noise:
            i1 = rng.poisson(i1).astype(float)
            i2 = rng.poisson(i2).astype(float)
        # a pixel that records zero photons has no defined OD
        return np.maximum(i1, 1.0), np.maximum(i2, 1.0)


def gaussian_column_weights(n_rows, width_pixels, offset=0.0):
    """Fraction of a transverse Gaussian (rms ``width_pixels``) landing in each row; sums to 1."""
    edges = np.arange(n_rows + 1) - n_rows / 2.0 - offset
    cdf = 0.5 * (1.0 + erf(edges / (math.sqrt(2.0) * width_pixels)))
    w = np.diff(cdf)
    return w / w.sum()


def deposit(profile: LinearDensityProfile, n_rows=21, width_pixels=1.0, pixel_size=None):
    """Atom number per pixel, rows transverse; each column holds n(z) * pixel size atoms."""
    pixel = pixel_size or profile.pixel_size or DEFAULT_PIXEL_SIZE
    per_column = profile.n * pixel
    return gaussian_column_weights(n_rows, width_pixels)[:, None] * per_column[None, :]


def synthesize_frames(profile: LinearDensityProfile, sigma: CrossSection = None, noise: NoiseModel = None,
                      n_rows=21, width_pixels=1.0, photons=None, supersample=False, frame_index=0,
                      pixel_size=None):
    """(I1, I2) frames whose ingestion returns ``profile``.

    With ``supersample`` the transverse Gaussian is resolved on a grid eight
    times finer than the pixels and the transmitted intensity is averaged
    over each pixel, reproducing the density underestimate of dense,
    unresolved clouds.
    """
    if not profile.is_nonnegative():
        raise ValidationError("synthetic frames need a non-negative profile")
    sigma = sigma or CrossSection()
    pixel = pixel_size or profile.pixel_size or DEFAULT_PIXEL_SIZE
    level = float(photons if photons is not None else (noise.photons if noise else 3.0e4))
    scale = sigma.sigma_eff / pixel**2  # OD per atom in one pixel
    if supersample:
        fine = gaussian_column_weights(n_rows * SUPERSAMPLE, width_pixels * SUPERSAMPLE)
        od_fine = fine[:, None] * (profile.n * pixel)[None, :] * scale * SUPERSAMPLE
        trans = np.exp(-od_fine).reshape(n_rows, SUPERSAMPLE, -1).mean(axis=1)
        od = -np.log(trans)
    else:
        od = deposit(profile, n_rows, width_pixels, pixel) * scale
    peak_od = float(od.max()) if od.size else 0.0
    i2 = np.full(od.shape, level)
    i1 = level * np.exp(-od)
    meta = {"n_rows": n_rows, "transverse_width_pixels": width_pixels, "photons": level,
            "calibration_factor": sigma.calibration_factor, "supersample": bool(supersample),
            "peak_od": peak_od}
    if peak_od > OD_WARN:
        meta["saturation_warning"] = True
        warnings.warn(f"peak optical density {peak_od:.2f} exceeds {OD_WARN}", QualityWarning, stacklevel=2)
    if noise is not None:
        i1, i2 = noise.apply(i1, i2, frame_index)
        meta.update({"seed": noise.seed, "frame_index": frame_index, "drift": noise.drift,
                     "shot_noise": noise.shot_noise})
    return (ImageFrame(i1, pixel, "with_atoms", dict(meta)), ImageFrame(i2, pixel, "without_atoms", dict(meta)))


def photons_for_scatter(profile: LinearDensityProfile, target=0.05, sigma: CrossSection = None, n_rows=21,
                        width_pixels=1.0):
    """Beam level giving relative shot-noise scatter ``target`` on the peak column.

    Var N_pixel = (Delta^2/sigma)^2 (1/I1 + 1/I2) for Poisson counts.
    """
    sigma = sigma or CrossSection()
    pixel = profile.pixel_size or DEFAULT_PIXEL_SIZE
    counts = deposit(profile, n_rows, width_pixels, pixel)
    col = int(np.argmax(counts.sum(axis=0)))
    od = counts[:, col] * sigma.sigma_eff / pixel**2
    atoms_per_od = pixel**2 / sigma.sigma_eff
    # with I2 = L: var = atoms_per_od^2 / L * sum(exp(od) + 1)
    var_times_level = atoms_per_od**2 * float(np.sum(np.exp(od) + 1.0))
    total = float(counts[:, col].sum())
    return var_times_level / (target * total) ** 2


# -- PGM frames with JSON sidecars --------------------------------------------------------


def sidecar_path(path):
    return os.fspath(path) + ".json"


def write_pgm(path, frame: ImageFrame, binary=True, extra=None):
    """Write a 16-bit PGM (P5, or P2 when ``binary`` is false) and its sidecar."""
    data = np.rint(frame.intensity)
    if data.min() < 0 or data.max() > PGM_MAXVAL:
        raise DataError(f"intensities must fit in 0..{PGM_MAXVAL} for a 16-bit PGM")
    data = data.astype(np.uint16)
    rows, cols = data.shape
    header = f"P{5 if binary else 2}\n{cols} {rows}\n{PGM_MAXVAL}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            fh.write(data.astype(">u2").tobytes())
        else:
            for row in data:
                fh.write((" ".join(str(v) for v in row) + "\n").encode("ascii"))
    side = {"pixel_size_m": frame.pixel_size, "role": frame.role}
    side.update(frame.meta)
    side.update(extra or {})
    with open(sidecar_path(path), "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path, pixel_size=None, role=None):
    """Read a P2/P5 PGM plus its optional sidecar into an :class:`ImageFrame`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise DataError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise DataError(f"{path}: not a PGM file (magic {magic!r})")
    try:
        cols, rows, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DataError(f"{path}: malformed PGM header") from exc
    if cols <= 0 or rows <= 0 or not 0 < maxval <= PGM_MAXVAL:
        raise DataError(f"{path}: bad PGM dimensions or maxval")
    if magic == b"P5":
        body = raw[pos + 1:]
        dtype = ">u2" if maxval > 255 else "u1"
        need = rows * cols * np.dtype(dtype).itemsize
        if len(body) < need:
            raise DataError(f"{path}: PGM data shorter than header promises")
        data = np.frombuffer(body[:need], dtype=dtype).reshape(rows, cols).astype(float)
    else:
        try:
            values = np.array(raw[pos:].split(), dtype=float)
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric PGM data") from exc
        if values.size < rows * cols:
            raise DataError(f"{path}: PGM data shorter than header promises")
        data = values[: rows * cols].reshape(rows, cols)
    meta = {}
    if os.path.exists(sidecar_path(path)):
        with open(sidecar_path(path)) as fh:
            try:
                meta = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{sidecar_path(path)}: invalid JSON") from exc
    size = pixel_size or meta.get("pixel_size_m", DEFAULT_PIXEL_SIZE)
    return ImageFrame(data, float(size), role or meta.get("role", "with_atoms"), meta)
