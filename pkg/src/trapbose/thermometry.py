"""Temperature and chemical potential from the wings of a linear density profile.

For each trial temperature the ideal-gas profile is fitted to the data with
only mu0 free, after excluding N_ex pixels on either side of the centre.
Where the model is right, mu0 does not depend on N_ex; the temperature at
which the slope d mu0 / d N_ex vanishes is the cloud's temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .errors import BoundaryError, InsufficientDataError, RangeError, ValidationError
from .ideal import ideal_linear_density_reduced
from .quasicondensate import eos_mu_of_n
from .units import DEFAULT_PIXEL_SIZE, LinearDensityProfile, TrapGeometry, make_reduced_units

MIN_WING_POINTS = 20
MIN_PER_SIDE = 10
REGRESSION_START = 11
WINDOW_MIN_POINTS = 15
SIGNAL_FLOOR = 5.0  # wing pixels count as signal above this many noise sigmas
MU_CEILING = 1.0 - 1e-9  # mu0 must stay below the transverse zero-point energy
REFINE_STEPS = 10
TOO_COLD = math.inf  # slope marker for a trial T at which the fit needs mu0 >= 1


def profile_centre(profile: LinearDensityProfile):
    """Density-weighted centroid (metres); negative noise pixels are ignored."""
    w = np.clip(profile.n, 0.0, None)
    if w.sum() <= 0:
        raise InsufficientDataError("profile has no positive density")
    return float(np.sum(w * profile.z) / w.sum())


def _pixel(profile):
    return profile.pixel_size or DEFAULT_PIXEL_SIZE


def _wing_mask(profile, n_ex, centre):
    # a pixel is excluded when its centre lies within n_ex pixels of the cloud centre
    if n_ex <= 0:
        return np.ones(profile.z.size, bool)
    return np.abs(profile.z - centre) > (n_ex - 0.5) * _pixel(profile)


def ideal_model(z, mu0, temperature, centre, geom):
    """Ideal-gas linear density (1/m) at positions z (m)."""
    units = make_reduced_units(geom)
    mu_z = mu0 - units.trap_energy(np.asarray(z) - centre)
    return units.linear_density_to_si(ideal_linear_density_reduced(mu_z, temperature))


@dataclass(frozen=True)
class WingFit:
    mu0: float
    residual: float  # rms, 1/m
    sigma_mu0: float  # standard error from the residual scatter
    n_points: int


def fit_wings(profile: LinearDensityProfile, temperature, n_ex, geom: TrapGeometry = None, centre=None,
              weights=None, mu_min=None):
    """Least-squares mu0 on the wings with its standard error."""
    geom = geom or TrapGeometry()
    centre = profile_centre(profile) if centre is None else centre
    mask = _wing_mask(profile, n_ex, centre)
    left = int(np.count_nonzero(mask & (profile.z < centre)))
    right = int(np.count_nonzero(mask & (profile.z > centre)))
    if left + right < MIN_WING_POINTS or min(left, right) < MIN_PER_SIDE:
        raise InsufficientDataError(f"N_ex={n_ex} leaves {left}+{right} wing points")
    z, n = profile.z[mask], profile.n[mask]
    w = np.ones_like(n) if weights is None else np.asarray(weights, dtype=float)[mask]

    def cost(mu0):
        r = ideal_model(z, mu0, temperature, centre, geom) - n
        return float(np.sum(w * r * r))

    lo = -40.0 * temperature if mu_min is None else mu_min
    res = minimize_scalar(cost, bounds=(lo, MU_CEILING), method="bounded", options={"xatol": 1e-7})
    mu0 = float(res.x)
    span = MU_CEILING - lo
    if MU_CEILING - mu0 < 1e-5 * span:
        raise BoundaryError(f"mu0 fit at T={temperature} N_ex={n_ex} reached the ceiling mu0 = 1", "upper")
    if mu0 - lo < 1e-5 * span:
        raise BoundaryError(f"mu0 fit at T={temperature} N_ex={n_ex} reached the floor {lo:.3g}", "lower")
    h = 1e-6
    jac = (ideal_model(z, mu0 + h, temperature, centre, geom) - ideal_model(z, mu0 - h, temperature, centre, geom)) / (2 * h)
    dof = max(z.size - 1, 1)
    var_r = res.fun / np.sum(w) * z.size / dof
    info = float(np.sum(w * jac * jac)) / float(np.mean(w))
    sigma = math.sqrt(var_r / info) if info > 0 else math.inf
    return WingFit(mu0, math.sqrt(res.fun / np.sum(w)), sigma, int(z.size))


def fit_mu0(profile: LinearDensityProfile, temperature, n_ex, geom: TrapGeometry = None, centre=None,
            weights=None, mu_min=None):
    """Least-squares mu0 of the ideal profile on the wings; returns (mu0, rms residual in 1/m)."""
    fit = fit_wings(profile, temperature, n_ex, geom, centre, weights, mu_min)
    return fit.mu0, fit.residual


def noise_floor(profile: LinearDensityProfile, fraction=0.15):
    """Robust rms of n over the outermost ``fraction`` of pixels on each side (1/m)."""
    k = max(int(fraction * profile.n.size), 3)
    edge = np.r_[profile.n[:k], profile.n[-k:]]
    return float(1.4826 * np.median(np.abs(edge - np.median(edge))))


def max_exclusion(profile: LinearDensityProfile, centre=None, min_points=WINDOW_MIN_POINTS):
    """Largest N_ex leaving ``min_points`` wing points on each side."""
    centre = profile_centre(profile) if centre is None else centre
    best = -1
    for k in range(profile.z.size // 2 + 1):
        mask = _wing_mask(profile, k, centre)
        if min(np.count_nonzero(mask & (profile.z < centre)), np.count_nonzero(mask & (profile.z > centre))) < min_points:
            break
        best = k
    return best


def signal_exclusion_limit(profile: LinearDensityProfile, centre=None, threshold=SIGNAL_FLOOR):
    """Largest N_ex that still leaves pixels above ``threshold`` noise sigmas on both sides.

    Beyond it the remaining wings are noise and the mu0 fits carry no
    temperature information.
    """
    centre = profile_centre(profile) if centre is None else centre
    floor = noise_floor(profile)
    d = np.abs(profile.z - centre) / _pixel(profile)
    ok = profile.n > threshold * floor
    left, right = ok & (profile.z < centre), ok & (profile.z > centre)
    if not left.any() or not right.any():
        return 0
    return int(math.floor(min(d[left].max(), d[right].max()) + 0.5))


def default_exclusions(profile: LinearDensityProfile, centre=None):
    centre = profile_centre(profile) if centre is None else centre
    n_max = min(max_exclusion(profile, centre), signal_exclusion_limit(profile, centre))
    return np.arange(0, max(n_max, 0) + 1)


@dataclass
class WingFitGrid:
    temperatures: np.ndarray
    n_ex: np.ndarray
    mu0: np.ndarray  # (n_T, n_ex); nan where a fit failed
    residuals: np.ndarray
    sigma: np.ndarray
    too_cold: np.ndarray  # (n_T, n_ex) fits that needed mu0 >= 1
    centre: float
    failures: list = field(default_factory=list)

    def rows(self):
        """(T, N_ex, mu0, residual) records, the Fig.-2-style families."""
        for i, t in enumerate(self.temperatures):
            for j, k in enumerate(self.n_ex):
                yield float(t), int(k), float(self.mu0[i, j]), float(self.residuals[i, j])


def _fit_row(profile, t, n_ex, geom, centre, weights):
    mu = np.full(n_ex.size, np.nan)
    res, sig = mu.copy(), mu.copy()
    cold = np.zeros(n_ex.size, bool)
    failures = []
    for j, k in enumerate(n_ex):
        try:
            f = fit_wings(profile, t, int(k), geom, centre, weights)
            mu[j], res[j], sig[j] = f.mu0, f.residual, f.sigma_mu0
        except BoundaryError as exc:
            cold[j] = exc.side == "upper"
            failures.append((float(t), int(k), str(exc)))
        except InsufficientDataError as exc:
            failures.append((float(t), int(k), str(exc)))
    return mu, res, sig, cold, failures


def wing_fit_grid(profile: LinearDensityProfile, temperatures, n_ex_values=None, geom: TrapGeometry = None,
                  weights=None):
    geom = geom or TrapGeometry()
    centre = profile_centre(profile)
    if n_ex_values is None:
        n_ex_values = default_exclusions(profile, centre)
    temps = np.asarray(temperatures, dtype=float)
    n_ex = np.asarray(n_ex_values, dtype=int)
    if np.any(temps <= 0):
        raise ValidationError("trial temperatures must be positive")
    if np.any(n_ex < 0) or np.any(n_ex >= profile.z.size // 2):
        raise ValidationError("N_ex must lie in [0, half the profile length)")
    rows = [_fit_row(profile, t, n_ex, geom, centre, weights) for t in temps]
    return WingFitGrid(temps, n_ex, np.array([r[0] for r in rows]), np.array([r[1] for r in rows]),
                       np.array([r[2] for r in rows]), np.array([r[3] for r in rows]), centre,
                       [f for r in rows for f in r[4]])


def _weighted_line(x, y, sigma):
    """Slope, its standard error and the weighted mean of y for a straight-line fit."""
    ok = np.isfinite(y) & np.isfinite(sigma) & (sigma > 0)
    if np.count_nonzero(ok) < 3:
        return math.nan, math.nan, math.nan
    x, y, w = x[ok], y[ok], 1.0 / sigma[ok] ** 2
    sw = w.sum()
    xm, ym = np.sum(w * x) / sw, np.sum(w * y) / sw
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    resid = y - ym - slope * (x - xm)
    # scatter-based error: neighbouring fits share data, so formal errors are too small
    s2 = np.sum(w * resid**2) / max(x.size - 2, 1)
    return float(slope), float(math.sqrt(s2 / sxx)), float(ym)


def _row_slope(n_ex, mu, sig, cold, start):
    sel = n_ex >= start
    if np.count_nonzero(sel) < 6:
        raise InsufficientDataError(f"need at least 6 N_ex values >= {start}, have {np.count_nonzero(sel)}")
    if cold[sel].any():
        return TOO_COLD, math.nan, math.nan
    return _weighted_line(n_ex[sel].astype(float), mu[sel], sig[sel])


@dataclass
class ThermometryReport:
    T_best: float
    mu0_best: float
    slopes: list  # (T, slope, stderr); slope inf where T is too cold for mu0 < 1
    T_uncertainty: float
    mu0_uncertainty: float
    mu_qc: float
    peak_density: float
    range_limited: bool
    regression_window: tuple
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        out = {
            "T_best": self.T_best,
            "mu0_best": self.mu0_best,
            "T_uncertainty": self.T_uncertainty,
            "mu0_uncertainty": self.mu0_uncertainty,
            "slopes": [[t, (None if not math.isfinite(s) else s), (None if not math.isfinite(e) else e)]
                       for t, s, e in self.slopes],
            "mu_qc": self.mu_qc,
            "peak_density_per_m": self.peak_density,
            "range_limited": self.range_limited,
            "regression_window": list(self.regression_window),
        }
        out.update(self.extra)
        return out


def _crossing(temps, slopes):
    """Index i with slope changing sign between temps[i] and temps[i+1] (too-cold counts as positive)."""
    for i in range(len(temps) - 1):
        a, b = slopes[i], slopes[i + 1]
        if math.isnan(a) or math.isnan(b):
            continue
        if a > 0 >= b or a < 0 <= b:
            return i
    return None


def _interpolate(t0, s0, m0, t1, s1, m1):
    if math.isinf(s0):
        # no usable slope on the cold side: settle on the bracket midpoint
        return 0.5 * (t0 + t1), m1, 0.5
    frac = s0 / (s0 - s1) if s0 != s1 else 0.5
    return t0 + frac * (t1 - t0), m0 + frac * (m1 - m0), frac


def select_temperature(grid: WingFitGrid, profile: LinearDensityProfile = None, geom: TrapGeometry = None,
                       start=REGRESSION_START):
    """T where the slope of mu0(N_ex) changes sign, interpolated linearly between trial temperatures.

    Slopes come from a straight line through mu0(N_ex), N_ex >= ``start``,
    weighted by the standard error of each fit.
    """
    if grid.temperatures.size < 4:
        raise ValidationError("need at least four trial temperatures")
    sel = grid.n_ex >= start
    window = (int(grid.n_ex[sel].min()), int(grid.n_ex[sel].max())) if sel.any() else (start, start)
    rows = [_row_slope(grid.n_ex, grid.mu0[i], grid.sigma[i], grid.too_cold[i], start)
            for i in range(grid.temperatures.size)]
    temps = grid.temperatures
    slopes = [r[0] for r in rows]
    i = _crossing(temps, slopes)
    if i is None:
        raise RangeError(f"slope of mu0(N_ex) keeps one sign over T in [{temps[0]:.3g}, {temps[-1]:.3g}]")
    return _report(temps[i], rows[i], temps[i + 1], rows[i + 1], i == 0 and math.isinf(slopes[0]),
                   i + 1 == temps.size - 1, [(float(t), float(r[0]), float(r[1])) for t, r in zip(temps, rows)],
                   window, profile, geom, len(grid.failures))


def _report(t0, r0, t1, r1, cold_edge, hot_edge, slopes, window, profile, geom, n_failed, refined=0):
    t_best, mu_best, frac = _interpolate(t0, r0[0], r0[2], t1, r1[0], r1[2])
    if math.isinf(r0[0]):
        t_err = 0.5 * (t1 - t0)
        mu_err = math.nan
    else:
        dslope = (r1[0] - r0[0]) / (t1 - t0)
        slope_err = math.hypot((1 - frac) * r0[1], frac * r1[1])
        t_err = abs(slope_err / dslope) if dslope else math.inf
        mu_err = abs((r1[2] - r0[2]) / (t1 - t0)) * t_err
    mu_qc = peak = math.nan
    if profile is not None:
        peak = peak_density(profile)
        mu_qc = qc_mu_from_peak(profile, geom)
    range_limited = (cold_edge and frac <= 0) or (hot_edge and frac >= 1)
    return ThermometryReport(T_best=float(t_best), mu0_best=float(mu_best), slopes=slopes,
                             T_uncertainty=float(t_err), mu0_uncertainty=float(mu_err), mu_qc=mu_qc,
                             peak_density=peak, range_limited=bool(range_limited), regression_window=window,
                             extra={"failed_fits": n_failed, "refinement_steps": refined})


def peak_density(profile: LinearDensityProfile):
    """Maximum of n(z) refined by a parabola through the top three points."""
    n = profile.n
    i = int(np.argmax(n))
    if 0 < i < n.size - 1:
        a, b, c = n[i - 1], n[i], n[i + 1]
        den = a - 2 * b + c
        if den < 0:
            return float(b - 0.125 * (a - c) ** 2 / den)
    return float(n[i])


def qc_mu_from_peak(profile: LinearDensityProfile, geom: TrapGeometry = None):
    """hbar omega_perp sqrt(1 + 4 n0 a) with n0 the refined peak density."""
    n0 = max(peak_density(profile), 0.0)
    return eos_mu_of_n(n0, geom)


def estimate_temperature(profile: LinearDensityProfile, geom: TrapGeometry = None, n_ex=REGRESSION_START):
    """Starting guess for the trial grid: joint (T, mu0) fit of the wings beyond n_ex."""
    geom = geom or TrapGeometry()
    centre = profile_centre(profile)
    mask = _wing_mask(profile, n_ex, centre)
    z, n = profile.z[mask], profile.n[mask]
    scale = max(float(np.max(np.abs(n))), 1e-300)

    def resid(p):
        t = math.exp(p[0])
        mu = MU_CEILING - math.exp(p[1])
        return (ideal_model(z, mu, t, centre, geom) - n) / scale

    best = None
    for t0 in (0.5, 2.0, 8.0):
        for gap in (0.5, 5.0):
            sol = least_squares(resid, [math.log(t0), math.log(gap)], bounds=([-5, -12], [6, 6]))
            if best is None or sol.cost < best.cost:
                best = sol
    return float(math.exp(best.x[0]))


def _slope_at(profile, t, n_ex, geom, centre, weights, start):
    mu, _, sig, cold, _ = _fit_row(profile, t, n_ex, geom, centre, weights)
    return _row_slope(n_ex, mu, sig, cold, start)


def fit_temperature(profile: LinearDensityProfile, geom: TrapGeometry = None, t_guess=None, t_range=None,
                    n_ex_values=None, weights=None, refine=REFINE_STEPS, start=REGRESSION_START):
    """Full wing-fit thermometry; returns (ThermometryReport, WingFitGrid).

    The trial grid defaults to 0.8..1.2 t_guess in 9 steps.  The bracketing
    pair of trial temperatures is then narrowed by bisection on the sign of
    the slope (``refine`` steps) before the final linear interpolation; this
    matters because a trial T just below the true one already forces the fit
    against the mu0 < 1 ceiling and yields no slope at all.
    """
    geom = geom or TrapGeometry()
    centre = profile_centre(profile)
    if n_ex_values is None:
        n_ex_values = default_exclusions(profile, centre)
    n_ex = np.asarray(n_ex_values, dtype=int)
    if np.count_nonzero(n_ex >= start) < 6:
        raise InsufficientDataError(f"profile supports N_ex up to {n_ex.max() if n_ex.size else -1}; "
                                    f"need six values from {start}")
    if t_range is None:
        t_guess = estimate_temperature(profile, geom) if t_guess is None else float(t_guess)
        t_range = np.linspace(0.8 * t_guess, 1.2 * t_guess, 9)
    grid = wing_fit_grid(profile, t_range, n_ex, geom, weights)
    report = select_temperature(grid, profile, geom, start)
    if refine <= 0:
        return report, grid
    temps = grid.temperatures
    slopes = [s for _, s, _ in report.slopes]
    i = _crossing(temps, slopes)
    lo_t, hi_t = float(temps[i]), float(temps[i + 1])
    lo = _slope_at(profile, lo_t, n_ex, geom, centre, weights, start)
    hi = _slope_at(profile, hi_t, n_ex, geom, centre, weights, start)
    positive_low = lo[0] > 0
    for _ in range(refine):
        mid_t = 0.5 * (lo_t + hi_t)
        mid = _slope_at(profile, mid_t, n_ex, geom, centre, weights, start)
        if math.isnan(mid[0]):
            break
        if (mid[0] > 0) == positive_low:
            lo_t, lo = mid_t, mid
        else:
            hi_t, hi = mid_t, mid
    refined = _report(lo_t, lo, hi_t, hi, report.range_limited, report.range_limited, report.slopes,
                      report.regression_window, profile, geom, len(grid.failures), refine)
    # uncertainty: slope scatter at the crossing over d slope / dT across the trial grid
    finite = [(t, s) for t, s, _ in report.slopes if math.isfinite(s)]
    if len(finite) >= 2:
        ts, ss = np.array(finite).T
        dsdt = np.polyfit(ts, ss, 1)[0]
        if dsdt:
            refined.T_uncertainty = float(abs(hi[1] / dsdt))
            refined.mu0_uncertainty = float(abs(_mu_slope(grid, start)) * refined.T_uncertainty)
    return refined, grid


def _mu_slope(grid, start):
    """d mu0 / dT of the N_ex-window mean across trial temperatures with complete rows."""
    sel = grid.n_ex >= start
    pts = [(t, np.nanmean(row[sel])) for t, row, cold in zip(grid.temperatures, grid.mu0, grid.too_cold)
           if not cold[sel].any() and np.isfinite(row[sel]).any()]
    if len(pts) < 2:
        return math.nan
    ts, ms = np.array(pts).T
    return float(np.polyfit(ts, ms, 1)[0])
