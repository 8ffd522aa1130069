"""Command-line interface.

    trapbose [--config FILE] [--out-dir DIR] [--seed N] <command> [options]

Commands: profile, fit, crossover, validate-lda, ingest, synth-image,
pipeline.  Every CSV gets a JSON sidecar and every JSON report a
``manifest`` field naming the run manifest written next to it.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 bad data.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from .bogoliubov import crossover_density
from .config import Config, RunManifest, load_config, parse_key_values
from .errors import (
    BoundaryError,
    ConvergenceError,
    DataError,
    DomainError,
    RangeError,
    SaturationError,
    TrapBoseError,
    TruncationError,
    ValidationError,
)
from .hartree_fock import hf_profile
from .ideal import ideal_profile
from .imaging import CrossSection, NoiseModel, ingest, photons_for_scatter, read_pgm, synthesize_frames, write_pgm
from .lda import beyond_lda_profile, lda_ratio, scan_ratio
from .hartree_fock import tabulate_hf
from .quasicondensate import quasicondensate_profile
from .thermometry import fit_temperature, peak_density
from .units import LinearDensityProfile, ThermoState, pixel_grid

log = logging.getLogger("trapbose")

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_DATA = 0, 2, 3, 4
FLOAT_FMT = "{:.10g}"


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def exit_code_for(exc):
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, (ConvergenceError, SaturationError, TruncationError, RangeError, BoundaryError)):
        return EXIT_CONVERGENCE
    if isinstance(exc, (ValidationError, DomainError)):
        return EXIT_VALIDATION
    if isinstance(exc, OSError):
        return EXIT_DATA
    return EXIT_CONVERGENCE


# -- output helpers ------------------------------------------------------------------------


class Run:
    """Output directory, config and manifest shared by one invocation."""

    def __init__(self, args, config: Config, argv):
        self.out_dir = args.out_dir
        os.makedirs(self.out_dir, exist_ok=True)
        self.config = config
        self.seed = args.seed if args.seed is not None else config["seed"]
        self.geom = config.geometry()
        self.manifest = RunManifest(command=list(argv), config=config.snapshot(), seed=self.seed,
                                    provenance=self.geom.provenance())
        self.written = []

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def finish(self):
        self.written.append(self.manifest.write(self.out_dir))
        return self.written

    def write_csv(self, name, header, rows, meta=None):
        path = self.path(name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        side = {"manifest": self.manifest.manifest_id, "columns": list(header)}
        side.update(meta or {})
        self.write_json(name + ".json", side, manifest=False)
        self.written.append(path)
        return path

    def write_json(self, name, data, manifest=True):
        path = self.path(name)
        payload = dict(data)
        if manifest:
            payload["manifest"] = self.manifest.manifest_id
        with open(path, "w") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.written.append(path)
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v)) if math.isfinite(v) else ""
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def read_profile_csv(path, column=None, pixel_size=None):
    """Profile CSV (z_m plus a density column in atoms per metre) -> LinearDensityProfile."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read profile {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header = rows[0]
    if "z_m" not in header:
        raise DataError(f"{path}: missing z_m column")
    if column is None:
        candidates = [h for h in header if h.endswith("n_per_m")]
        if not candidates:
            raise DataError(f"{path}: no *n_per_m column")
        column = candidates[0]
    if column not in header:
        raise DataError(f"{path}: no column {column!r}")
    iz, ic = header.index("z_m"), header.index(column)
    try:
        z = np.array([float(r[iz]) for r in rows[1:]])
        n = np.array([float(r[ic]) if r[ic] != "" else np.nan for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed numeric data") from exc
    if not np.all(np.isfinite(n)):
        raise DataError(f"{path}: column {column} has missing values")
    return LinearDensityProfile(z, n, pixel_size, meta={"source": os.fspath(path), "column": column})


def _range(text, kind=float):
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise UsageError(f"range {text!r} must be a:b or a:b:n")
    try:
        if kind is int:
            a, b = int(parts[0]), int(parts[1])
            return np.arange(a, b + 1)
        a, b = float(parts[0]), float(parts[1])
        n = int(parts[2]) if len(parts) == 3 else 9
    except ValueError as exc:
        raise UsageError(f"cannot parse range {text!r}") from exc
    return np.linspace(a, b, n)


def _profile_rows(z, profiles, pixel, marker=None):
    rows = []
    for i, zi in enumerate(z):
        row = [zi]
        for p in profiles:
            row += [p.n[i], p.n[i] * pixel]
        if marker is not None:
            row += [marker, marker / pixel]
        rows.append(row)
    return rows


# -- commands ------------------------------------------------------------------------------


def _model_profile(model, state, run, z, args):
    pixel = run.config.pixel_size
    if model == "ideal":
        return ideal_profile(state, run.geom, z, pixel)
    if model == "hf":
        return hf_profile(state, run.geom, z, method=args.hf_method, pixel_size=pixel)
    if model == "qc":
        if args.peak_n is not None:
            return quasicondensate_profile(z, run.geom, peak_n=args.peak_n, pixel_size=pixel)
        return quasicondensate_profile(z, run.geom, mu0=state.mu0, pixel_size=pixel)
    raise UsageError(f"unknown model {model!r}")


def cmd_profile(args, run: Run):
    pixel = run.config.pixel_size
    n_pix = args.n_pixels or run.config["n_pixels"]
    z = pixel_grid(n_pix, pixel)
    if args.mu is None:
        if args.model != "qc" or args.peak_n is None:
            raise UsageError("--mu is required (or --peak-n with --model qc)")
    if args.model != "qc" and args.T is None:
        raise UsageError("--T is required for this model")
    state = ThermoState(args.mu if args.mu is not None else 0.0, args.T if args.T is not None else 1.0)
    models = ["ideal", "hf", "qc"] if args.model == "all" else [args.model]
    profiles = []
    for m in models:
        if m == "ideal" and state.mu0 >= 1.0:
            # the ideal gas has no equilibrium state above the zero-point energy
            if args.model == "all":
                profiles.append(LinearDensityProfile(z, np.full(z.size, np.nan), pixel, {"model": "ideal"}))
                continue
        try:
            profiles.append(_model_profile(m, state, run, z, args))
        except TrapBoseError as exc:
            raise type(exc)(f"{m} model: {exc}") if not isinstance(exc, (ConvergenceError, SaturationError)) else exc
    marker = None
    meta = {"models": models, "mu0": args.mu, "T": args.T, "peak_n_per_m": args.peak_n, "pixel_size_m": pixel}
    if args.mark_crossover:
        rep = crossover_density(state.temperature, run.geom, pixel_size=pixel)
        marker = rep.n_co_per_m
        meta["crossover"] = rep.as_dict()
    header = ["z_m"]
    for m in models:
        prefix = "" if len(models) == 1 else f"{m}_"
        header += [f"{prefix}n_per_m", f"{prefix}n_atoms_per_pixel"]
    if marker is not None:
        header += ["crossover_n_per_m", "crossover_atoms_per_pixel"]
    name = f"profile_{args.model}.csv"
    run.write_csv(name, header, _profile_rows(z, profiles, pixel, marker), meta)
    if len(models) > 1:
        # one file per model as well, for tools that read a single curve
        for m, p in zip(models, profiles):
            run.write_csv(f"profile_{m}.csv", ["z_m", "n_per_m", "n_atoms_per_pixel"],
                          _profile_rows(z, [p], pixel), dict(meta, models=[m]))
    return 0


def cmd_fit(args, run: Run):
    prof = read_profile_csv(args.profile, args.column, run.config.pixel_size)
    t_range = _range(args.t_range) if args.t_range else None
    nex = _range(args.nex_range, int) if args.nex_range else None
    report, grid = fit_temperature(prof, run.geom, t_guess=args.t_guess, t_range=t_range, n_ex_values=nex)
    run.write_json("fit_report.json", report.as_dict())
    run.write_csv("fit_mu0_families.csv", ["T", "N_ex", "mu0", "rms_residual_per_m"], list(grid.rows()),
                  {"profile": os.fspath(args.profile)})
    print(json.dumps(_jsonable({"T_best": report.T_best, "mu0_best": report.mu0_best})))
    return 0


def cmd_crossover(args, run: Run):
    rep = crossover_density(args.T, run.geom, pixel_size=run.config.pixel_size)
    run.write_json("crossover.json", rep.as_dict())
    print(json.dumps(_jsonable({"n_co_per_m": rep.n_co_per_m, "n_co_atoms_per_pixel": rep.n_co_atoms_per_pixel})))
    return 0


def cmd_validate_lda(args, run: Run):
    if args.scan_mu:
        mus = _range(args.scan_mu)
        reports = scan_ratio(args.T, mus, run.geom)
        run.write_csv("lda_ratio_scan.csv", ["mu0", "ratio", "mu_eff", "delta_E", "ground_state_fraction"],
                      [[r.mu0, r.ratio, r.mu_eff, r.delta_E, r.ground_state_fraction] for r in reports],
                      {"T": args.T})
        return 0
    if args.mu is None:
        raise UsageError("--mu or --scan-mu is required")
    state = ThermoState(args.mu, args.T)
    table = tabulate_hf(args.T, args.mu, run.geom)
    rep = lda_ratio(state, run.geom, table)
    out = rep.as_dict()
    if not args.skip_beyond:
        z = pixel_grid(run.config["n_pixels"], run.config.pixel_size)
        prof = beyond_lda_profile(state, run.geom, z, table, pixel_size=run.config.pixel_size)
        out["max_profile_deviation"] = prof.meta["max_deviation_over_peak"]
    run.write_json("lda_report.json", out)
    print(json.dumps(_jsonable({k: out[k] for k in ("mu_eff", "delta_E", "ratio", "ground_state_fraction")})))
    return 0


def cmd_ingest(args, run: Run):
    i1 = read_pgm(args.i1, role="with_atoms")
    i2 = read_pgm(args.i2, role="without_atoms")
    factor = args.sigma_factor if args.sigma_factor is not None else run.config["calibration_factor"]
    sigma = CrossSection(factor, run.geom.probe_wavelength)
    prof = ingest(i1, i2, sigma, pixel_size=i1.pixel_size)
    pixel = prof.pixel_size
    run.write_csv(args.output or "ingested_profile.csv", ["z_m", "n_per_m", "n_atoms_per_pixel"],
                  [[z, n, n * pixel] for z, n in zip(prof.z, prof.n)],
                  {"i1": os.fspath(args.i1), "i2": os.fspath(args.i2), "calibration_factor": factor,
                   "negative_pixels": prof.meta["negative_pixels"]})
    return 0


def _noise_for(prof, run, scatter, photons):
    rows = run.config["frame_rows"]
    width = run.config["transverse_width_pixels"]
    sigma = CrossSection(run.config["calibration_factor"], run.geom.probe_wavelength)
    if photons is None and scatter:
        photons = photons_for_scatter(prof, scatter, sigma, rows, width)
    if photons is None:
        return None, sigma
    return NoiseModel(photons=photons, seed=run.seed), sigma


def synth_frames_to_disk(prof, run: Run, n_frames, scatter=None, photons=None, supersample=False, prefix=""):
    noise, sigma = _noise_for(prof, run, scatter, photons)
    paths = []
    for k in range(n_frames):
        i1, i2 = synthesize_frames(prof, sigma, noise, n_rows=run.config["frame_rows"],
                                   width_pixels=run.config["transverse_width_pixels"],
                                   photons=None if noise else 3.0e4, supersample=supersample, frame_index=k)
        extra = {"manifest": run.manifest.manifest_id}
        p1, p2 = run.path(f"{prefix}i1_{k:03d}.pgm"), run.path(f"{prefix}i2_{k:03d}.pgm")
        write_pgm(p1, i1, extra=extra)
        write_pgm(p2, i2, extra=extra)
        run.written += [p1, p2]
        paths.append((p1, p2))
    return paths, sigma


def cmd_synth_image(args, run: Run):
    prof = read_profile_csv(args.profile, args.column, run.config.pixel_size)
    synth_frames_to_disk(prof, run, args.frames, args.scatter, args.photons, args.supersample)
    return 0


def average_ingest(pairs, sigma):
    acc = None
    for p1, p2 in pairs:
        prof = ingest(read_pgm(p1, role="with_atoms"), read_pgm(p2, role="without_atoms"), sigma)
        acc = prof.n if acc is None else acc + prof.n
    return LinearDensityProfile(prof.z, acc / len(pairs), prof.pixel_size, meta={"frames": len(pairs)})


SCENARIO_KEYS = ("model", "T", "mu0", "frames", "scatter", "n_pixels")


def cmd_pipeline(args, run: Run):
    try:
        with open(args.scenario) as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read scenario {args.scenario}: {exc}") from exc
    sc = parse_key_values(text, os.fspath(args.scenario), SCENARIO_KEYS)
    if not sc:
        raise UsageError(f"scenario {args.scenario} is empty")
    missing = [k for k in ("model", "T", "mu0") if k not in sc]
    if missing:
        raise UsageError(f"scenario lacks {', '.join(missing)}")
    model = sc["model"]
    if model not in ("ideal", "qc-core"):
        raise UsageError(f"scenario model must be ideal or qc-core, got {model!r}")
    try:
        t_true, mu_true = float(sc["T"]), float(sc["mu0"])
        frames = int(sc.get("frames", 30))
        scatter = float(sc.get("scatter", 0.05))
        n_pix = int(sc.get("n_pixels", run.config["n_pixels"]))
    except ValueError as exc:
        raise UsageError(f"scenario values: {exc}") from exc
    pixel = run.config.pixel_size
    z = pixel_grid(n_pix, pixel)
    truth_state = ThermoState(mu_true, t_true)
    stage = "truth"
    try:
        if model == "ideal":
            truth = ideal_profile(truth_state, run.geom, z, pixel)
        else:
            n_hf = hf_profile(truth_state, run.geom, z, method="table", pixel_size=pixel).n
            n_qc = quasicondensate_profile(z, run.geom, mu0=mu_true).n
            truth = LinearDensityProfile(z, np.maximum(n_hf, n_qc), pixel, {"model": "qc-core"})
        stage = "synth-image"
        pairs, sigma = synth_frames_to_disk(truth, run, frames, scatter if scatter > 0 else None, prefix="frame_")
        stage = "ingest"
        data = average_ingest(pairs, sigma)
        run.write_csv("pipeline_data.csv", ["z_m", "n_per_m", "n_atoms_per_pixel"],
                      [[a, b, b * pixel] for a, b in zip(data.z, data.n)], {"frames": frames})
        stage = "fit"
        rep, _ = fit_temperature(data, run.geom)
        stage = "profile"
        fitted = ThermoState(rep.mu0_best, rep.T_best)
        peak = peak_density(data)
        models = {"qc": quasicondensate_profile(z, run.geom, peak_n=peak, pixel_size=pixel)}
        if fitted.mu0 < 1.0:
            models["ideal"] = ideal_profile(fitted, run.geom, z, pixel)
        models["hf"] = hf_profile(fitted, run.geom, z, method="table", pixel_size=pixel)
    except TrapBoseError as exc:
        raise type(exc)(f"pipeline stage {stage}: {exc}") from exc
    centre = int(np.argmin(np.abs(z)))
    deviations = {m: {"max_abs_over_peak": float(np.max(np.abs(p.n - data.n)) / peak),
                      "centre_ratio_model_over_data": float(p.n[centre] / data.n[centre])}
                  for m, p in models.items()}
    report = {
        "scenario": sc,
        "injected": {"T": t_true, "mu0": mu_true},
        "recovered": {"T": rep.T_best, "mu0": rep.mu0_best, "T_uncertainty": rep.T_uncertainty,
                      "mu0_uncertainty": rep.mu0_uncertainty},
        "relative_error": {"T": rep.T_best / t_true - 1, "mu0": (rep.mu0_best - mu_true) / abs(mu_true)
                           if mu_true else None},
        "mu_qc_from_peak": rep.mu_qc,
        "profile_deviation": deviations,
        "hf_below_data_at_centre": bool(models["hf"].n[centre] < data.n[centre]),
    }
    run.write_json("pipeline_report.json", report)
    print(json.dumps(_jsonable(report["recovered"])))
    return 0


# -- parser --------------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="trapbose", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--out-dir", default=".", help="directory for outputs (created if needed)")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("profile", help="model linear density profiles")
    s.add_argument("--model", choices=["ideal", "hf", "qc", "all"], required=True)
    s.add_argument("--mu", type=float, help="central chemical potential (hbar omega_perp)")
    s.add_argument("--T", type=float, help="temperature (hbar omega_perp / k_B)")
    s.add_argument("--peak-n", type=float, help="quasi-condensate peak density (1/m)")
    s.add_argument("--n-pixels", type=int)
    s.add_argument("--hf-method", choices=["table", "direct"], default="table")
    s.add_argument("--mark-crossover", action="store_true")
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("fit", help="wing-fit thermometry of a profile CSV")
    s.add_argument("--profile", required=True)
    s.add_argument("--column")
    s.add_argument("--t-range", help="a:b:n trial temperatures")
    s.add_argument("--t-guess", type=float)
    s.add_argument("--nex-range", help="a:b excluded-pixel counts")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("crossover", help="Bogoliubov cross-over density")
    s.add_argument("--T", type=float, required=True)
    s.set_defaults(func=cmd_crossover)

    s = sub.add_parser("validate-lda", help="LDA validity ratio and beyond-LDA profile check")
    s.add_argument("--mu", type=float)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--scan-mu", help="a:b:n scan of mu0 (ratio CSV)")
    s.add_argument("--skip-beyond", action="store_true", help="skip the discrete-state profile")
    s.set_defaults(func=cmd_validate_lda)

    s = sub.add_parser("ingest", help="absorption frame pair -> profile CSV")
    s.add_argument("--i1", required=True)
    s.add_argument("--i2", required=True)
    s.add_argument("--sigma-factor", type=float)
    s.add_argument("--output")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth-image", help="profile CSV -> synthetic PGM frame pairs")
    s.add_argument("--profile", required=True)
    s.add_argument("--column")
    s.add_argument("--frames", type=int, default=1)
    s.add_argument("--scatter", type=float, help="relative shot-noise scatter of the peak column")
    s.add_argument("--photons", type=float, help="beam level per pixel (overrides --scatter)")
    s.add_argument("--supersample", action="store_true")
    s.set_defaults(func=cmd_synth_image)

    s = sub.add_parser("pipeline", help="synth-image -> ingest -> fit -> model comparison")
    s.add_argument("--scenario", required=True)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        config = load_config(args.config)
        run = Run(args, config, argv)
        code = args.func(args, run)
        run.finish()
        return code
    except (TrapBoseError, OSError) as exc:
        print(f"trapbose: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
