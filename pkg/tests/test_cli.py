import csv
import glob
import json
import os
from pathlib import Path

import numpy as np
import pytest

from trapbose.cli import build_parser, main, read_profile_csv
from trapbose.errors import DataError

GOLDEN = Path(__file__).parent / "golden"
PINNED = [
    (["profile", "--model", "ideal", "--mu", "0.5", "--T", "2.75", "--n-pixels", "41"],
     "profile_ideal.csv", "profile_ideal_mu0.5_T2.75.csv"),
    (["profile", "--model", "qc", "--mu", "1.8", "--n-pixels", "41"],
     "profile_qc.csv", "profile_qc_mu1.8.csv"),
]


def run(tmp_path, *args):
    return main(["--out-dir", str(tmp_path), *args])


def manifests(out):
    return {Path(p).name[len("manifest-"):-len(".json")] for p in glob.glob(os.path.join(out, "manifest-*.json"))}


@pytest.mark.parametrize("argv, produced, golden", PINNED)
def test_golden_profiles(tmp_path, argv, produced, golden):
    assert run(tmp_path, *argv) == 0
    assert (tmp_path / produced).read_bytes() == (GOLDEN / golden).read_bytes()
    side = json.loads((tmp_path / (produced + ".json")).read_text())
    expected = json.loads((GOLDEN / (golden + ".json")).read_text())
    side.pop("manifest")
    expected.pop("manifest")
    assert side == expected


def test_csv_is_rfc4180_with_header(tmp_path):
    assert run(tmp_path, *PINNED[0][0]) == 0
    raw = (tmp_path / "profile_ideal.csv").read_bytes()
    assert raw.count(b"\r\n") == 42
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["z_m", "n_per_m", "n_atoms_per_pixel"]
    for z, n, px in rows[1:]:
        assert float(px) == pytest.approx(float(n) * 6e-6, rel=1e-9)


def test_identical_invocations_are_identical(tmp_path):
    argv = ["profile", "--model", "all", "--mu", "0.5", "--T", "2.75", "--n-pixels", "21", "--hf-method", "direct"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, *argv) == 0
    assert run(b, *argv) == 0
    assert (a / "profile_all.csv").read_bytes() == (b / "profile_all.csv").read_bytes()
    for m in ("ideal", "hf", "qc"):
        with open(a / f"profile_{m}.csv") as fh:
            assert next(csv.reader(fh)) == ["z_m", "n_per_m", "n_atoms_per_pixel"]
    # same command line, same directory: same manifest
    assert run(a, *argv) == 0
    assert len(manifests(a)) == 1


def test_every_output_references_its_manifest(tmp_path):
    assert run(tmp_path, "--seed", "3", "profile", "--model", "ideal", "--mu", "0.5", "--T", "2.75",
               "--n-pixels", "161") == 0
    assert run(tmp_path, "--seed", "3", "synth-image", "--profile", str(tmp_path / "profile_ideal.csv"),
               "--frames", "2", "--scatter", "0.05") == 0
    ids = manifests(tmp_path)
    assert len(ids) == 2
    sidecars = glob.glob(str(tmp_path / "*.json"))
    data_sidecars = [p for p in sidecars if not Path(p).name.startswith("manifest-")]
    assert len(data_sidecars) == 5  # one CSV and four PGM frames
    for p in data_sidecars:
        assert json.loads(Path(p).read_text())["manifest"] in ids
    man = json.loads((tmp_path / f"manifest-{sorted(ids)[0]}.json").read_text())
    assert {"command", "config", "seed", "provenance", "versions", "created"} <= set(man)


def test_ideal_near_divergence_is_finite(tmp_path):
    assert run(tmp_path, "profile", "--model", "ideal", "--mu", "0.99", "--T", "2.75", "--n-pixels", "41") == 0
    prof = read_profile_csv(tmp_path / "profile_ideal.csv")
    assert np.all(np.isfinite(prof.n)) and prof.n.max() > 0


@pytest.mark.parametrize("argv, code", [
    (["profile", "--model", "spline", "--mu", "0.5", "--T", "2.75"], 2),
    (["profile", "--model", "ideal", "--T", "2.75"], 2),
    (["profile", "--model", "ideal", "--mu", "1.2", "--T", "2.75"], 2),
    (["profile", "--model", "ideal", "--mu", "0.5", "--T", "-1"], 2),
    (["crossover", "--T", "0"], 2),
    (["nonsense"], 2),
    (["ingest", "--i1", "missing_i1.pgm", "--i2", "missing_i2.pgm"], 4),
    (["fit", "--profile", "missing.csv"], 4),
])
def test_exit_codes(tmp_path, argv, code):
    assert run(tmp_path, *argv) == code


def test_fit_on_too_short_profile_is_data_error(tmp_path):
    assert run(tmp_path, "profile", "--model", "ideal", "--mu", "0.5", "--T", "2.75", "--n-pixels", "21") == 0
    assert run(tmp_path, "fit", "--profile", str(tmp_path / "profile_ideal.csv")) == 4


def test_bad_trial_range_is_numerical_failure(tmp_path):
    assert run(tmp_path, "profile", "--model", "ideal", "--mu", "0.5", "--T", "2.75", "--n-pixels", "161") == 0
    code = run(tmp_path, "fit", "--profile", str(tmp_path / "profile_ideal.csv"), "--t-range", "3.0:3.6:4")
    assert code == 3


def test_fit_command(tmp_path, capsys):
    assert run(tmp_path, "profile", "--model", "ideal", "--mu", "0.5", "--T", "2.75", "--n-pixels", "161") == 0
    capsys.readouterr()
    assert run(tmp_path, "fit", "--profile", str(tmp_path / "profile_ideal.csv")) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["T_best"] == pytest.approx(2.75, rel=1e-3)
    report = json.loads((tmp_path / "fit_report.json").read_text())
    assert report["manifest"] in manifests(tmp_path)
    with open(tmp_path / "fit_mu0_families.csv") as fh:
        assert next(csv.reader(fh)) == ["T", "N_ex", "mu0", "rms_residual_per_m"]


def test_synth_then_ingest_roundtrip(tmp_path):
    assert run(tmp_path, "profile", "--model", "ideal", "--mu", "0.5", "--T", "2.75", "--n-pixels", "81") == 0
    assert run(tmp_path, "synth-image", "--profile", str(tmp_path / "profile_ideal.csv")) == 0
    assert run(tmp_path, "ingest", "--i1", str(tmp_path / "i1_000.pgm"), "--i2", str(tmp_path / "i2_000.pgm"),
               "--output", "back.csv") == 0
    truth = read_profile_csv(tmp_path / "profile_ideal.csv")
    back = read_profile_csv(tmp_path / "back.csv")
    # 16-bit rounding of a 3e4-photon beam
    assert np.max(np.abs(back.n - truth.n)) < 0.01 * truth.n.max()


def test_read_profile_csv_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        read_profile_csv(p)


def test_empty_scenario_is_usage_error(tmp_path):
    scenario = tmp_path / "empty.scn"
    scenario.write_text("# nothing here\n")
    assert run(tmp_path, "pipeline", "--scenario", str(scenario)) == 2
    scenario.write_text("model = ideal\n")
    assert run(tmp_path, "pipeline", "--scenario", str(scenario)) == 2


def test_pipeline_qc_core_hf_below_data(tmp_path):
    scenario = tmp_path / "qc.scn"
    scenario.write_text("model = qc-core\nT = 2.75\nmu0 = 1.65\nframes = 5\nscatter = 0.05\nn_pixels = 161\n")
    assert run(tmp_path, "--seed", "1", "pipeline", "--scenario", str(scenario)) == 0
    report = json.loads((tmp_path / "pipeline_report.json").read_text())
    assert report["hf_below_data_at_centre"]
    assert report["profile_deviation"]["hf"]["centre_ratio_model_over_data"] < 0.9
    assert report["profile_deviation"]["qc"]["centre_ratio_model_over_data"] == pytest.approx(1.0, abs=0.05)
    assert report["manifest"] in manifests(tmp_path)


def test_parser_lists_all_commands():
    text = build_parser().format_help()
    for cmd in ("profile", "fit", "crossover", "validate-lda", "ingest", "synth-image", "pipeline"):
        assert cmd in text
