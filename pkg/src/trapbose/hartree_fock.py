"""Finite-temperature Hartree-Fock gas, transversely trapped, longitudinally free.

Atoms are treated as independent bosons in the transverse Hamiltonian

    H = -laplacian_perp / 2 + r^2 / 2 + 2 g rho(r)        (hbar omega_perp, a_perp units)

and every transverse eigenmode carries a free 1D thermal gas along z, so the
3D density is

    rho(r) = sum_{l,j} d_l |phi_{lj}(r)|^2 g_{1/2}(exp((mu - E_{lj})/T)) / Lambda.

Two ways of finding the self-consistent rho are provided: damped fixed-point
iteration and a variational fit of a Hermite-Gaussian trial density that
minimises the self-consistency residual.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize
from scipy.special import eval_hermite

from . import kernels
from .basis import SectorBasis, sector_basis, sizes_for_cutoff
from .bose import MIN_REDUCED_GAP
from .errors import ConvergenceError, QualityWarning, SaturationError, ValidationError
from .ideal import ideal_linear_density_reduced
from .units import (
    LinearDensityProfile,
    RadialGrid,
    ThermoState,
    TrapGeometry,
    local_chemical_potential,
    make_reduced_units,
)

log = logging.getLogger(__name__)

ENERGY_WINDOW = 20.0  # levels kept up to mu + ENERGY_WINDOW * T
BASIS_PAD = 12
DAMPING = 0.3
TOLERANCE = 1e-8
MAX_ITER = 500
XI_TARGET = 1e-4
LINEAR_DENSITY_TARGET = 5e-3
NEGATIVITY_PENALTY = 1e3


@dataclass(frozen=True, eq=False)
class RadialDensity:
    """3D density on a radial grid (atoms / a_perp^3) and its transverse integral."""

    rho: np.ndarray
    grid: RadialGrid
    linear_density: float = None  # atoms per a_perp

    def __post_init__(self):
        if self.linear_density is None:
            object.__setattr__(self, "linear_density", self.grid.integrate(self.rho))

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros_like(grid.r), grid, 0.0)

    def scaled(self, factor):
        return RadialDensity(self.rho * factor, self.grid, self.linear_density * factor)

    def norm(self):
        return math.sqrt(self.grid.integrate(self.rho**2))


@dataclass(frozen=True, eq=False)
class TransverseSpectrum:
    """Eigenpairs of a radially symmetric transverse Hamiltonian, sector by sector.

    Only l >= 0 is stored; sectors with l > 0 are doubly degenerate.
    Levels at or above ``e_max`` are outside the retained window.
    """

    basis: SectorBasis
    energies: np.ndarray  # (l_max+1, n_basis)
    coeffs: np.ndarray  # (l_max+1, n_basis, n_basis)
    e_max: float

    @property
    def ground_energy(self):
        return float(self.energies[0, 0])

    @property
    def kept(self):
        return self.energies < self.e_max

    @property
    def degeneracy(self):
        return self.basis.degeneracy

    def level(self, l, j):
        return float(self.energies[abs(l), j])

    def wavefunction(self, l, j):
        return self.coeffs[abs(l), :, j] @ self.basis.values[abs(l)]

    def lowest_levels(self, count):
        """The ``count`` lowest (E, l, j) triples with l >= 0."""
        e = np.where(self.kept, self.energies, np.inf)
        order = np.argsort(e, axis=None)[:count]
        ls, js = np.unravel_index(order, e.shape)
        return [(float(e[l, j]), int(l), int(j)) for l, j in zip(ls, js) if np.isfinite(e[l, j])]


@dataclass
class SelfConsistencyReport:
    method: str
    mu: float
    temperature: float
    xi: float
    iterations: int
    n_h: float  # atoms per a_perp, before the final map application
    n_h_prime: float  # after it
    ground_energy: float
    converged: bool
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def linear_density_mismatch(self):
        return abs(self.n_h - self.n_h_prime) / self.n_h if self.n_h else float("nan")

    def as_dict(self):
        out = asdict(self)
        out["linear_density_mismatch"] = self.linear_density_mismatch
        return out


@dataclass(frozen=True)
class HermiteTrial:
    """rho(r) = sum_p c_{2p} H_{2p}(r / r0) exp(-r^2 / 2 r0^2), p = 0..3."""

    r0: float
    c: tuple

    def density(self, r):
        x = np.asarray(r) / self.r0
        poly = sum(cp * eval_hermite(2 * p, x) for p, cp in enumerate(self.c))
        return poly * np.exp(-0.5 * x**2)

    def as_array(self):
        return np.concatenate([[self.r0], self.c])

    @classmethod
    def from_array(cls, p):
        return cls(float(p[0]), tuple(float(v) for v in p[1:5]))

    @classmethod
    def project(cls, rho, grid, r0):
        """Weighted least-squares projection of ``rho`` onto the family at fixed r0."""
        x = grid.r / r0
        design = np.stack([eval_hermite(2 * p, x) * np.exp(-0.5 * x**2) for p in range(4)], axis=1)
        w = np.sqrt(grid.weights)
        c, *_ = np.linalg.lstsq(design * w[:, None], np.asarray(rho) * w, rcond=None)
        return cls(float(r0), tuple(float(v) for v in c))


def relative_residual(new, old, grid):
    """int (new - old)^2 2 pi r dr / int old^2 2 pi r dr."""
    den = grid.integrate(old**2)
    if den <= 0:
        return math.inf
    return grid.integrate((new - old) ** 2) / den


class HartreeFock:
    """Self-consistent solver at fixed temperature and coupling.

    ``mu_max`` is the largest chemical potential the solver will be asked
    about; it fixes the retained energy window and the basis size.
    """

    def __init__(self, temperature, coupling, mu_max=2.0, grid=None, window=ENERGY_WINDOW,
                 pad=BASIS_PAD, l_max=None, n_basis=None):
        if temperature <= 0:
            raise ValidationError("temperature must be positive")
        if coupling < 0:
            raise ValidationError("coupling must be non-negative")
        self.temperature = float(temperature)
        self.coupling = float(coupling)
        self.mu_max = float(mu_max)
        self.grid = grid or RadialGrid.gauss()
        self.e_max = max(self.mu_max, 1.0) + window * self.temperature
        l_auto, n_auto = sizes_for_cutoff(self.e_max, pad)
        self.basis = sector_basis(self.grid, l_max if l_max is not None else l_auto,
                                  n_basis if n_basis is not None else n_auto)
        self.thermal_wavelength = math.sqrt(2 * math.pi / self.temperature)

    # -- the self-consistency map ------------------------------------------------

    def spectrum(self, rho_in: RadialDensity):
        energies, coeffs = self.basis.diagonalize(2.0 * self.coupling * rho_in.rho)
        return TransverseSpectrum(self.basis, energies, coeffs, self.e_max)

    def thermal_density(self, rho_in: RadialDensity, mu):
        """Thermal density of independent bosons in the HF potential of ``rho_in``.

        Returns (RadialDensity, TransverseSpectrum).  The linear density is the
        exact mode sum, not a grid integral.
        """
        if mu > self.mu_max + 1e-12:
            raise ValidationError(f"mu = {mu} above the solver's mu_max = {self.mu_max}")
        spec = self.spectrum(rho_in)
        e0 = spec.ground_energy
        if (e0 - mu) / self.temperature < MIN_REDUCED_GAP:
            raise SaturationError(
                f"mu = {mu:.6g} reached the lowest transverse level {e0:.6g}", mu=mu, lowest_level=e0
            )
        kept = spec.kept
        gap = np.where(kept, (spec.energies - mu) / self.temperature, 50.0)
        occ = np.where(kept, kernels.g_half(gap), 0.0)
        occ *= spec.degeneracy[:, None] / self.thermal_wavelength
        phi = self.basis.wavefunctions(spec.coeffs)
        rho = kernels.thermal_accumulate(occ, phi)
        return RadialDensity(rho, self.grid, float(occ.sum())), spec

    # -- damped fixed-point iteration -------------------------------------------

    def solve_iterative(self, mu, rho0: RadialDensity = None, alpha=DAMPING, tol=TOLERANCE,
                        max_iter=MAX_ITER, anderson=0):
        """Damped iteration rho <- (1 - alpha) rho + alpha F(rho), from ``rho0`` (default 0).

        Converged when the relative L2 change of F(rho) between successive
        iterations drops below ``tol``.  ``anderson > 0`` mixes in that many
        previous steps (Anderson acceleration); 0 is plain damping.
        """
        rho = rho0 if rho0 is not None else RadialDensity.zeros(self.grid)
        prev = None
        history = []
        mixer = _AndersonMixer(anderson, alpha, self.grid.weights) if anderson else None
        for it in range(1, max_iter + 1):
            try:
                out, spec = self.thermal_density(rho, mu)
            except SaturationError as exc:
                report = self._report("iterative", mu, math.nan, it, rho, rho, math.nan, False, str(exc))
                raise ConvergenceError(
                    f"iteration saturated at step {it} (mu = {mu:.4g})", last_iterate=rho, report=report
                ) from exc
            if prev is not None:
                change = math.sqrt(relative_residual(out.rho, prev.rho, self.grid))
                history.append(change)
                if not np.isfinite(change):
                    break
                if change < tol:
                    return self._finish_iterative(out, mu, it)
                if _diverging(history):
                    break
            if mixer is None:
                nxt = (1 - alpha) * rho.rho + alpha * out.rho
            else:
                nxt = np.maximum(mixer.step(rho.rho, out.rho), 0.0)
            rho = RadialDensity(nxt, self.grid)
            prev = out
        report = self._report("iterative", mu, math.nan, it, rho, rho, math.nan, False,
                              "no convergence")
        raise ConvergenceError(
            f"damped iteration did not converge in {it} steps (mu = {mu:.4g})", last_iterate=rho,
            report=report,
        )

    def _finish_iterative(self, out, mu, iterations):
        again, spec = self.thermal_density(out, mu)
        xi = relative_residual(again.rho, out.rho, self.grid)
        report = self._report("iterative", mu, xi, iterations, out, again, spec.ground_energy, True)
        return out, report

    def _report(self, method, mu, xi, iterations, before, after, e0, ok, message=""):
        return SelfConsistencyReport(
            method=method, mu=float(mu), temperature=self.temperature, xi=float(xi),
            iterations=int(iterations), n_h=float(before.linear_density),
            n_h_prime=float(after.linear_density), ground_energy=float(e0), converged=ok,
            message=message,
        )

    # -- variational Hermite-Gaussian fit ------------------------------------------

    def residual_xi(self, params, mu, penalty=NEGATIVITY_PENALTY):
        """Objective xi(r0, c) plus a penalty on negative trial density."""
        r0 = params[0]
        if not (0.2 < r0 < self.grid.r_max):
            return 1e6
        trial = HermiteTrial.from_array(params).density(self.grid.r)
        den = self.grid.integrate(trial**2)
        if not np.isfinite(den) or den <= 0:
            return 1e6
        clipped = np.maximum(trial, 0.0)
        try:
            out, _ = self.thermal_density(RadialDensity(clipped, self.grid), mu)
        except SaturationError:
            return 1e3
        neg = self.grid.integrate(np.minimum(trial, 0.0) ** 2)
        return self.grid.integrate((out.rho - trial) ** 2) / den + penalty * neg / den

    def _seed(self, mu):
        """Last density the cold-start iteration reaches, scanning mu downward."""
        m = mu
        for _ in range(60):
            try:
                rho, _ = self.solve_iterative(m)
                return rho
            except ConvergenceError:
                m -= 0.1
        raise ConvergenceError(f"no converging iterative seed below mu = {mu}")

    def solve_variational(self, mu, seed: RadialDensity = None, n_starts=3, max_fev=1500,
                          amplitudes=(1.0, 1.15, 1.3, 1.5, 1.75, 2.0, 2.5),
                          widths=(0.8, 1.2, 1.6, 2.0, 2.5, 3.0, 3.5, 4.0)):
        """Minimise xi over (r0, c0, c2, c4, c6) with a multi-start simplex search.

        Starts are the ``n_starts`` best amplitude rescalings of ``seed``
        (default: the last converging cold-start iterative solution), each
        projected on the trial family at the best width.
        """
        if seed is None:
            seed = self._seed(mu)
        candidates = []
        for amp in amplitudes:
            best = None
            for r0 in widths:
                p = HermiteTrial.project(seed.rho * amp, self.grid, r0).as_array()
                v = self.residual_xi(p, mu)
                if best is None or v < best[0]:
                    best = (v, p)
            candidates.append(best)
        candidates.sort(key=lambda vp: vp[0])
        options = dict(maxfev=max_fev, xatol=1e-10, fatol=1e-14, adaptive=True)
        best_res, nfev = None, 0
        for v0, p0 in candidates[:n_starts]:
            res = minimize(self.residual_xi, p0, args=(mu,), method="Nelder-Mead", options=options)
            nfev += res.nfev
            if best_res is None or res.fun < best_res.fun:
                best_res = res
        # restart from the best vertex until the simplex stops improving
        for _ in range(3):
            res = minimize(self.residual_xi, best_res.x, args=(mu,), method="Nelder-Mead",
                           options=options)
            nfev += res.nfev
            improved = res.fun < 0.99 * best_res.fun
            if res.fun < best_res.fun:
                best_res = res
            if not improved:
                break
        trial = HermiteTrial.from_array(best_res.x)
        values = trial.density(self.grid.r)
        rho = RadialDensity(np.maximum(values, 0.0), self.grid, self.grid.integrate(values))
        try:
            out, spec = self.thermal_density(RadialDensity(np.maximum(values, 0.0), self.grid), mu)
            e0, n_prime = spec.ground_energy, out.linear_density
            xi = relative_residual(out.rho, values, self.grid)
        except SaturationError:
            e0, n_prime, xi = math.nan, math.nan, math.inf
        ok = xi < XI_TARGET and abs(rho.linear_density - n_prime) < LINEAR_DENSITY_TARGET * rho.linear_density
        report = SelfConsistencyReport(
            method="variational", mu=float(mu), temperature=self.temperature, xi=float(xi),
            iterations=int(nfev), n_h=float(rho.linear_density), n_h_prime=float(n_prime),
            ground_energy=float(e0), converged=bool(ok),
            extra={"r0": trial.r0, "c": list(trial.c), "objective": float(best_res.fun)},
        )
        if not ok:
            warnings.warn(
                f"variational HF at mu = {mu:.4g}: xi = {xi:.3g}, "
                f"n_h mismatch = {report.linear_density_mismatch:.3g}",
                QualityWarning, stacklevel=2,
            )
        return rho, report

    # -- combined strategy ------------------------------------------------------------

    def solve(self, mu, rho0: RadialDensity = None):
        """Iterate (warm-started from ``rho0`` when given); fall back to the variational fit."""
        for alpha, depth in ((DAMPING, 5), (DAMPING, 0), (DAMPING / 3, 0)):
            try:
                return self.solve_iterative(mu, rho0=rho0, alpha=alpha, anderson=depth)
            except ConvergenceError as exc:
                log.info("iterative HF failed at mu=%.4g alpha=%.3g: %s", mu, alpha, exc)
        return self.solve_variational(mu, seed=rho0)


class _AndersonMixer:
    """Anderson acceleration of x <- x + alpha (F(x) - x) with a short history."""

    def __init__(self, depth, alpha, weights):
        self.depth = depth
        self.alpha = alpha
        self.w = np.sqrt(weights)
        self.xs, self.fs = [], []

    def step(self, x, fx):
        f = fx - x
        self.xs.append(x.copy())
        self.fs.append(f.copy())
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.fs.pop(0)
        if len(self.xs) == 1:
            return x + self.alpha * f
        dx = np.diff(np.array(self.xs), axis=0).T
        df = np.diff(np.array(self.fs), axis=0).T
        gamma, *_ = np.linalg.lstsq(df * self.w[:, None], f * self.w, rcond=None)
        return x + self.alpha * f - (dx + self.alpha * df) @ gamma


def _diverging(history, window=60):
    """True when the iteration has stopped making progress over ``window`` steps."""
    if len(history) < 2 * window:
        return False
    return min(history[-window:]) > 0.5 * min(history[:-window])


def coupling_for(geom: TrapGeometry = None, coupling=None):
    if coupling is not None:
        return float(coupling)
    return make_reduced_units(geom or TrapGeometry()).dimensionless_coupling


def make_solver(temperature, geom=None, coupling=None, mu_max=2.0, **kwargs):
    return HartreeFock(temperature, coupling_for(geom, coupling), mu_max=mu_max, **kwargs)


def thermal_density_for_potential(rho_in: RadialDensity, mu, temperature, geom=None, coupling=None,
                                  **kwargs):
    """One application of the self-consistency map; returns (RadialDensity, TransverseSpectrum)."""
    solver = make_solver(temperature, geom, coupling, mu_max=max(mu, 1.0), grid=rho_in.grid, **kwargs)
    return solver.thermal_density(rho_in, mu)


def solve_hf_iterative(mu, temperature, geom=None, coupling=None, rho0=None, alpha=DAMPING,
                       tol=TOLERANCE, max_iter=MAX_ITER, **kwargs):
    solver = make_solver(temperature, geom, coupling, mu_max=max(mu, 1.0), **kwargs)
    return solver.solve_iterative(mu, rho0=rho0, alpha=alpha, tol=tol, max_iter=max_iter)


def solve_hf_variational(mu, temperature, geom=None, coupling=None, seed=None, **kwargs):
    solver = make_solver(temperature, geom, coupling, mu_max=max(mu, 1.0), **kwargs)
    return solver.solve_variational(mu, seed=seed)


# -- tabulation in mu and the LDA profile ----------------------------------------------


@dataclass(frozen=True, eq=False)
class HFTable:
    """n_h(mu) and transverse levels E_{lj}(mu) on a grid of chemical potentials."""

    temperature: float
    coupling: float
    mu: np.ndarray  # ascending
    linear_density: np.ndarray  # atoms per a_perp
    levels: np.ndarray  # (n_nodes, l_max+1, n_basis); nan outside the window
    reports: list

    def __post_init__(self):
        object.__setattr__(self, "_log_n", PchipInterpolator(self.mu, np.log(self.linear_density)))

    @property
    def mu_min(self):
        return float(self.mu[0])

    @property
    def mu_max(self):
        return float(self.mu[-1])

    def _check(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu > self.mu_max * (1 + 1e-12) + 1e-12):
            raise ValidationError(f"mu above the tabulated range (max {self.mu_max})")
        return mu

    def n_h(self, mu):
        """Linear density (atoms per a_perp); ideal gas below the tabulated range."""
        mu = self._check(mu)
        out = np.empty_like(mu)
        inside = mu >= self.mu_min
        out[inside] = np.exp(self._log_n(mu[inside]))
        if np.any(~inside):
            # HF shift is proportional to the density, negligible this far down
            ratio = self.linear_density[0] / ideal_linear_density_reduced(self.mu_min, self.temperature)
            out[~inside] = ratio * ideal_linear_density_reduced(mu[~inside], self.temperature)
        return out if out.ndim else float(out)

    def level(self, l, j, mu):
        """E_{lj}(mu), interpolated; below the table the HF shift scales with density."""
        mu = self._check(mu)
        values = self.levels[:, l, j]
        bare = 2 * j + l + 1.0
        if np.any(~np.isfinite(values)):
            raise ValidationError(f"level (l={l}, j={j}) not retained in the table")
        interp = PchipInterpolator(self.mu, values)
        out = np.empty_like(mu)
        inside = mu >= self.mu_min
        out[inside] = interp(mu[inside])
        if np.any(~inside):
            scale = self.n_h(mu[~inside]) / self.linear_density[0]
            out[~inside] = bare + (values[0] - bare) * scale
        return out if out.ndim else float(out)

    def ground_energy(self, mu):
        return self.level(0, 0, mu)

    def modes_below(self, energy, mu):
        """(l, j) pairs whose level at ``mu`` lies below ``energy``."""
        idx = int(np.searchsorted(self.mu, mu))
        idx = min(max(idx, 0), self.mu.size - 1)
        e = self.levels[idx]
        ls, js = np.nonzero(np.isfinite(e) & (e < energy))
        return sorted(zip(ls.tolist(), js.tolist()), key=lambda lj: e[lj])


def table_nodes(mu_top, span, n_nodes):
    """Nodes mu_top - span (1 - u)^2, u uniform: dense near the top where n_h curves most."""
    u = np.linspace(0.0, 1.0, n_nodes)
    return mu_top - span * (1.0 - u) ** 2


def tabulate_hf(temperature, mu_top, geom=None, coupling=None, n_nodes=200, span=None,
                solver: HartreeFock = None, progress=None):
    """Solve HF on ``n_nodes`` chemical potentials up to ``mu_top`` by continuation.

    Each node starts from the previous node's density; nodes where the
    damped iteration fails are handed to the variational solver.
    """
    t = float(temperature)
    span = 25.0 * t if span is None else float(span)
    solver = solver or make_solver(t, geom, coupling, mu_max=max(mu_top, 1.0))
    mus = table_nodes(mu_top, span, n_nodes)
    rho = None
    dens, levels, reports = [], [], []
    for i, mu in enumerate(mus):
        rho, report = solver.solve(float(mu), rho0=rho)
        spec = solver.spectrum(rho)
        dens.append(report.n_h_prime if report.method == "iterative" else report.n_h)
        levels.append(np.where(spec.kept, spec.energies, np.nan))
        reports.append(report)
        if progress:
            progress(i, mu, report)
    return HFTable(t, solver.coupling, mus, np.array(dens), np.array(levels), reports)


def hf_profile(state: ThermoState, geom: TrapGeometry, zgrid, method="direct", table: HFTable = None,
               coupling=None, pixel_size=None, solver_kwargs=None):
    """Hartree-Fock LDA profile n(z) = n_h(mu(z), T), atoms per metre.

    ``method="direct"`` solves at every distinct mu(z) (continuation from the
    dilute edge inward); ``method="table"`` interpolates an :class:`HFTable`
    (built on demand with 200 nodes).  The reports of the direct solves are
    attached as ``profile.meta["reports"]``.
    """
    z = np.asarray(zgrid, dtype=float)
    units = make_reduced_units(geom)
    mu_z = local_chemical_potential(state, geom, z)
    g = units.dimensionless_coupling if coupling is None else float(coupling)
    meta = {"model": "hf", "mu0": state.mu0, "T": state.temperature, "coupling": g}
    if method == "table":
        table = table or tabulate_hf(state.temperature, state.mu0, coupling=g)
        n = table.n_h(mu_z)
        meta["reports"] = [r.as_dict() for r in table.reports]
    elif method == "direct":
        solver = make_solver(state.temperature, coupling=g, mu_max=max(state.mu0, 1.0),
                             **(solver_kwargs or {}))
        keys = np.round(mu_z, 12)
        unique = np.unique(keys)
        values = {}
        reports = []
        rho = None
        for mu in unique:
            try:
                rho, report = solver.solve(float(mu), rho0=rho)
            except ConvergenceError as exc:
                zs = z[keys == mu]
                raise ConvergenceError(f"HF failed at z = {zs[0]:.4g} m: {exc}", exc.last_iterate,
                                       exc.report) from exc
            values[mu] = report.n_h_prime if report.method == "iterative" else report.n_h
            reports.append(report.as_dict())
        n = np.array([values[k] for k in keys])
        meta["reports"] = reports
    else:
        raise ValidationError(f"unknown method {method!r}")
    return LinearDensityProfile(z=z, n=units.linear_density_to_si(n), pixel_size=pixel_size, meta=meta)
