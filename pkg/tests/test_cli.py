"""Command line pipeline: config handling, manifests, determinism."""

import hashlib
import json
import os
import warnings

import numpy as np
import pytest
from click.testing import CliRunner

from qpchain.cli import main
from qpchain.config import apply_override, config_from_dict, load_config, save_config

C2_Z3 = 27 / (4 * np.pi**2)


def base_config(out, **model_extra):
    model = {"group": "Z3", "lambda": 0.5, "l_intermediate": 7, "L_large": 10}
    model.update(model_extra)
    return {
        "model": model,
        "method": {"t_max": 0.75, "dt": 0.25, "max_chi": 24, "restarts": 4},
        "packets": [
            {"center": 3, "momentum": 1.2, "width": 1.0},
            {"center": 7, "momentum": -1.2, "width": 1.0},
        ],
        "out": out,
    }


def write_config(path, cfg):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh)
    return str(path)


def invoke(*args):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return CliRunner().invoke(main, list(args), catch_exceptions=False)


def checksums(outdir, skip=("manifest.json",)):
    out = {}
    for name in sorted(os.listdir(outdir)):
        if name in skip:
            continue
        with open(os.path.join(outdir, name), "rb") as fh:
            out[name] = hashlib.sha256(fh.read()).hexdigest()
    return out


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    """One complete pipeline pass on a small chain, shared by the checks."""
    outdir = str(tmp_path_factory.mktemp("pipeline"))
    cfg_path = write_config(
        tmp_path_factory.mktemp("cfg") / "run.json", base_config(outdir)
    )
    result = invoke("all", "--config", cfg_path)
    assert result.exit_code == 0, result.output
    return outdir, cfg_path


class TestConfig:
    def test_round_trip_idempotent(self, tmp_path):
        raw = base_config(str(tmp_path / "out"))
        once = config_from_dict(raw).to_dict()
        twice = config_from_dict(once).to_dict()
        assert once == twice

    def test_save_load_identity(self, tmp_path):
        cfg = config_from_dict(base_config(str(tmp_path / "out")))
        path = str(tmp_path / "cfg.json")
        save_config(path, cfg)
        assert load_config(path).to_dict() == cfg.to_dict()

    def test_g_maps_to_lambda(self):
        cfg = config_from_dict({"model": {"group": "Z3", "g": 1.0}})
        assert cfg.model.coupling == pytest.approx(0.5, abs=1e-15)

    def test_both_couplings_rejected(self):
        with pytest.raises(ValueError, match="exactly one"):
            config_from_dict({"model": {"group": "Z3", "lambda": 0.5, "g": 1.0}})

    def test_neither_coupling_rejected(self):
        with pytest.raises(ValueError, match="exactly one"):
            config_from_dict({"model": {"group": "Z3"}})

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            config_from_dict({"model": {"group": "Z3", "lambda": 0.5, "spin": 2}})

    def test_override_parses_dotted_path(self):
        raw = {"model": {"group": "Z3", "lambda": 0.5}}
        apply_override(raw, "method.dt=0.125")
        apply_override(raw, "model.lambda=1.0")
        assert raw["method"]["dt"] == 0.125
        assert raw["model"]["lambda"] == 1.0

    def test_override_rejects_malformed(self):
        with pytest.raises(ValueError, match="KEY=VALUE"):
            apply_override({}, "method.dt")


class TestCliErrors:
    def test_missing_group_fails(self, tmp_path):
        path = write_config(tmp_path / "bad.json", {"model": {"lambda": 0.5}})
        result = invoke("spectrum", "--config", path, "--out", str(tmp_path / "o"))
        assert result.exit_code != 0
        assert "model.group" in result.output

    def test_scatter_before_extract_fails(self, tmp_path):
        cfg = base_config(str(tmp_path / "out"))
        path = write_config(tmp_path / "cfg.json", cfg)
        result = invoke("scatter", "--config", path)
        assert result.exit_code != 0
        assert "creation.npz" in result.output
        assert "extract" in result.output

    def test_stale_artifact_detected(self, tmp_path):
        cfg = base_config(str(tmp_path / "out"), l_intermediate=5)
        path = write_config(tmp_path / "cfg.json", cfg)
        assert invoke("spectrum", "--config", path).exit_code == 0
        target = os.path.join(cfg["out"], "spectrum.npz")
        with open(target, "ab") as fh:
            fh.write(b"tampered")
        result = invoke("localize", "--config", path)
        assert result.exit_code != 0
        assert "stale" in result.output


class TestManifest:
    def test_g_coupling_recorded_as_lambda(self, tmp_path):
        cfg = base_config(str(tmp_path / "out"), l_intermediate=5)
        del cfg["model"]["lambda"]
        cfg["model"]["g"] = 1.0
        path = write_config(tmp_path / "cfg.json", cfg)
        assert invoke("spectrum", "--config", path).exit_code == 0
        manifest = json.load(open(os.path.join(cfg["out"], "manifest.json")))
        assert manifest["lambda"] == pytest.approx(0.5, abs=1e-15)
        assert manifest["config"]["model"]["g"] == 1.0

    def test_every_file_checksummed(self, full_run):
        outdir, _ = full_run
        manifest = json.load(open(os.path.join(outdir, "manifest.json")))
        recorded = {}
        for stage in manifest["stages"].values():
            recorded.update(stage["outputs"])
        on_disk = checksums(outdir)
        assert set(recorded) == set(on_disk)
        assert recorded == on_disk

    def test_stage_records_walls_and_inputs(self, full_run):
        outdir, _ = full_run
        manifest = json.load(open(os.path.join(outdir, "manifest.json")))
        assert set(manifest["stages"]) == {
            "spectrum", "localize", "extract", "vacuum",
            "lightcone", "propagator", "scatter", "detect",
        }
        for record in manifest["stages"].values():
            assert record["wall_time"] > 0
        assert "creation.npz" in manifest["stages"]["scatter"]["inputs"]

    def test_seed_override_lands_in_manifest(self, tmp_path):
        cfg = base_config(str(tmp_path / "out"), l_intermediate=5)
        path = write_config(tmp_path / "cfg.json", cfg)
        assert invoke(
            "spectrum", "--config", path, "--seed", "11"
        ).exit_code == 0
        manifest = json.load(open(os.path.join(cfg["out"], "manifest.json")))
        assert manifest["seed"] == 11

    def test_stage_override_lands_in_config_echo(self, tmp_path):
        cfg = base_config(str(tmp_path / "out"), l_intermediate=5)
        path = write_config(tmp_path / "cfg.json", cfg)
        result = invoke(
            "spectrum", "--config", path, "--stage-override", "method.n_bands=2"
        )
        assert result.exit_code == 0
        manifest = json.load(open(os.path.join(cfg["out"], "manifest.json")))
        assert manifest["config"]["method"]["n_bands"] == 2


class TestGoldenSpectrum:
    def test_flat_point_levels_table(self, tmp_path):
        # every momentum sector shows the strong-coupling tower
        # {4,6,7,8,9} C2; the isolated one-packet levels carry exact
        # multiplicities (4 and 6 and 7 C2 twice, 9 C2 four times) while
        # 8 C2 also hosts the degenerate two-packet continuum
        cfg = base_config(str(tmp_path / "out"), l_intermediate=8)
        cfg["model"]["lambda"] = 1.0
        path = write_config(tmp_path / "cfg.json", cfg)
        result = invoke(
            "spectrum", "--config", path,
            "--stage-override", "method.spectrum_count=25",
        )
        assert result.exit_code == 0
        rows = list(csv_rows(os.path.join(cfg["out"], "levels.csv")))
        tower = np.sort(
            [float(r["excitation"]) for r in rows if r["sector"] == "0"]
        )
        assert tower[0] == 0.0
        counts = {
            n: np.sum(np.abs(tower - n * C2_Z3) < 1e-9 * n * C2_Z3)
            for n in (4, 6, 7, 8, 9)
        }
        assert counts[4] == 2 and counts[6] == 2 and counts[7] == 2
        assert counts[9] == 4
        assert counts[8] >= 2


def csv_rows(path):
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        yield from _csv.DictReader(fh)


class TestArtifacts:
    def test_all_stage_outputs_exist(self, full_run):
        outdir, _ = full_run
        for name in (
            "spectrum.npz", "spectrum.csv", "levels.csv",
            "wannier.npz", "wannier.csv", "creation.npz", "creation.csv",
            "vacuum_state.npz", "vacuum.csv",
            "lightcone.csv", "lightcone_excess.csv", "lightcone.json",
            "propagator.npz", "spectral.npz", "ridge.csv",
            "scatter_init.npz", "scatter_final.npz", "scatter_excess.csv",
            "scatter_entropy.csv", "scatter_energy.csv", "scatter.json",
            "epsilon.csv", "bound.csv", "detect.json",
            "detect_signal_0_1pp.csv",
        ):
            assert os.path.exists(os.path.join(outdir, name)), name

    def test_csv_full_precision(self, full_run):
        outdir, _ = full_run
        rows = list(csv_rows(os.path.join(outdir, "spectrum.csv")))
        from qpchain.pipeline import load_spectrum

        _, _, _, bands = load_spectrum(os.path.join(outdir, "spectrum.npz"))
        band = bands["0_1++"]
        got = np.array(
            [float(r["excitation"]) for r in rows if r["band"] == "0_1++"]
        )
        assert np.array_equal(got, band.energies)

    def test_scatter_energy_drift_reported(self, full_run):
        outdir, _ = full_run
        report = json.load(open(os.path.join(outdir, "scatter.json")))
        assert report["energy_drift_max"] < 1e-4
        assert report["norm_drift_max"] < 1e-6

    def test_detect_reports_calibration(self, full_run):
        outdir, _ = full_run
        report = json.load(open(os.path.join(outdir, "detect.json")))
        assert report["species"] == ["0_1++"]
        assert len(report["coefficients"]) == 1
        assert report["epsilon_peak_t0"] > 0


class TestDeterminism:
    def test_rerun_same_seed_identical_checksums(self, full_run, tmp_path):
        outdir, cfg_path = full_run
        second = str(tmp_path / "again")
        result = invoke("all", "--config", cfg_path, "--out", second)
        assert result.exit_code == 0, result.output
        assert checksums(outdir) == checksums(second)
