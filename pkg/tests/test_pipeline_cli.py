"""Config resolution, run manifests, CLI subcommands and exit codes.

End-to-end paths run on a deliberately tiny configuration (32^2 phantom,
24 angles, 3 training steps) so the whole module stays fast.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from freqct.errors import ConfigError, PipelineError
from freqct.grid import read_tensor
from freqct.pipeline import (
    RunConfig,
    parse_override,
    phantom_rois,
    resolve_config,
    run_all,
    validate_config,
)

TINY = {
    "seed": 5,
    "geometry": {"n_angles": 24, "n_detectors": 46, "image_size": 32},
    "train": {"steps": 3, "hidden_channels": 2},
    "perturb": {"n": 2},
}


def tiny_config(tmp_path, **extra):
    raw = json.loads(json.dumps(TINY))
    raw.update(extra)
    raw["output_dir"] = str(tmp_path / "run")
    return resolve_config(raw)


class TestConfigResolution:
    def test_desk_defaults(self):
        cfg = resolve_config({"seed": 1})
        assert cfg.profile == "desk"
        assert cfg.geometry.n_angles == 180
        assert cfg.train_config.steps == 200
        assert cfg.perturb.n == 4
        assert cfg.raw["noise"]["target_p_max"] == 12.0

    def test_paper_profile(self):
        cfg = resolve_config({"seed": 1}, profile="paper")
        assert (cfg.geometry.n_angles, cfg.geometry.n_detectors) == (1440, 720)
        assert cfg.train_config.hidden_channels == 64
        assert cfg.train_config.steps == 1500

    def test_missing_seed_warns_and_defaults(self):
        cfg = resolve_config({})
        assert cfg.seed == 0
        assert any("seed" in w for w in cfg.warnings)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            resolve_config({"seed": 1, "typo_field": 2})

    def test_override_precedence(self):
        cfg = resolve_config({"seed": 1, "perturb": {"beta": 0.7}}, {"perturb.beta": 0.9})
        assert cfg.perturb.beta == 0.9

    def test_invariant_diagnostics_name_field(self):
        with pytest.raises(ConfigError, match="PerturbConfig invariant"):
            resolve_config({"seed": 1, "perturb": {"r1": 0.9, "r2": 0.6}})

    def test_parse_override_types(self):
        assert parse_override("train.steps", "17") == 17
        assert parse_override("train.use_clamp", "false") is False
        assert parse_override("metrics.data_range", "none") is None
        with pytest.raises(ConfigError):
            parse_override("train.steps", "abc")
        with pytest.raises(ConfigError):
            parse_override("no.such.field", "1")

    def test_hash_ignores_output_dir(self):
        a = resolve_config({"seed": 1, "output_dir": "x"})
        b = resolve_config({"seed": 1, "output_dir": "y"})
        assert a.config_hash() == b.config_hash()

    def test_hash_without_clamp_equalizes_ablation_arms(self):
        on = resolve_config({"seed": 1, "train": {"use_clamp": True}})
        off = resolve_config({"seed": 1, "train": {"use_clamp": False}})
        assert on.config_hash() != off.config_hash()
        assert on.config_hash_without_clamp() == off.config_hash_without_clamp()

    def test_with_overrides(self):
        cfg = resolve_config({"seed": 1})
        derived = cfg.with_overrides(seed=9, n=8, use_clamp=False)
        assert derived.seed == 9
        assert derived.perturb.n == 8
        assert derived.train_config.use_clamp is False
        assert cfg.seed == 1  # original untouched

    def test_validate_clean_config(self):
        assert validate_config(resolve_config({"seed": 1})) == []


class TestPhantomRois:
    def test_disjoint_and_inside(self):
        sig, bg = phantom_rois(128)
        assert not sig.overlaps(bg)
        img = np.zeros((128, 128))
        sig.extract(img)
        bg.extract(img)


@pytest.fixture(scope="module")
def manifest_and_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("tiny")
    cfg = tiny_config(tmp)
    return run_all(cfg), tmp / "run"


class TestRunAll:

    def test_artifact_inventory(self, manifest_and_dir):
        manifest, out = manifest_and_dir
        assert manifest["error"] is None
        paths = {a["path"] for a in manifest["artifacts"]}
        required = {
            "phantom.fct", "sino_clean.fct", "sino_noisy.fct", "sino_denoised.fct",
            "recon_clean.fct", "recon_noisy.fct", "recon_denoised.fct", "metrics.csv",
        }
        assert required <= paths
        assert len(paths) >= 8
        for a in manifest["artifacts"]:
            assert (out / a["path"]).exists()
            assert len(a["sha256"]) == 64

    def test_metrics_block(self, manifest_and_dir):
        manifest, _ = manifest_and_dir
        m = manifest["metrics"]
        for key in ("psnr_noisy", "psnr_denoised", "ssim_noisy", "ssim_denoised",
                    "rmse_noisy", "rmse_denoised", "snr_denoised", "cnr_denoised"):
            assert key in m

    def test_manifest_file_written(self, manifest_and_dir):
        manifest, out = manifest_and_dir
        on_disk = json.loads((out / "manifest.json").read_text())
        assert on_disk["config_hash"] == manifest["config_hash"]
        assert [s["name"] for s in on_disk["stages"]] == [
            "phantom", "project", "simulate-noise", "train", "denoise", "fbp", "metrics",
        ]

    def test_determinism_bit_identical_checksums(self, manifest_and_dir, tmp_path):
        manifest, _ = manifest_and_dir
        rerun = run_all(tiny_config(tmp_path))
        a = {x["path"]: x["sha256"] for x in manifest["artifacts"]}
        b = {x["path"]: x["sha256"] for x in rerun["artifacts"]}
        assert a == b

    def test_tensor_meta_carries_provenance(self, manifest_and_dir):
        _, out = manifest_and_dir
        grid = read_tensor(out / "sino_noisy.fct")
        assert "i0" in grid.meta and "seed" in grid.meta

    def test_failure_writes_partial_manifest(self, tmp_path, monkeypatch):
        import freqct.pipeline as pipeline_mod

        def boom(*args, **kwargs):
            raise ValueError("detector bank on fire")

        monkeypatch.setattr(pipeline_mod, "simulate_ldct", boom)
        with pytest.raises(PipelineError, match="simulate-noise"):
            run_all(tiny_config(tmp_path))
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["error"]["stage"] == "simulate-noise"
        assert "on fire" in manifest["error"]["message"]
        done = {a["path"] for a in manifest["artifacts"]}
        assert "phantom.fct" in done and "sino_clean.fct" in done


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "freqct", *args],
        capture_output=True, text=True, cwd=cwd,
    )


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    (tmp / "cfg.json").write_text(json.dumps({**TINY, "output_dir": str(tmp / "out")}))
    return tmp


class TestCli:

    def test_stagewise_pipeline(self, workdir):
        cfg = ["--config", "cfg.json"]
        assert run_cli(["phantom", *cfg, "--out", "ph.fct"], workdir).returncode == 0
        assert run_cli(
            ["project", *cfg, "--image", "ph.fct", "--out", "sino.fct", "--scale-max"], workdir
        ).returncode == 0
        assert run_cli(
            ["simulate-noise", *cfg, "--sino", "sino.fct", "--out", "noisy.fct"], workdir
        ).returncode == 0
        assert run_cli(["train", *cfg, "--sino", "noisy.fct", "--outdir", "net"], workdir).returncode == 0
        assert run_cli(
            ["denoise", "--sino", "noisy.fct", "--net", "net", "--out", "den.fct"], workdir
        ).returncode == 0
        assert run_cli(["fbp", *cfg, "--sino", "den.fct", "--out", "rec.fct"], workdir).returncode == 0
        assert run_cli(["fbp", *cfg, "--sino", "sino.fct", "--out", "ref.fct"], workdir).returncode == 0
        res = run_cli(
            ["metrics", *cfg, "--ref", "ref.fct", "--test", "rec.fct", "--out", "m.csv"], workdir
        )
        assert res.returncode == 0
        assert "psnr" in (workdir / "m.csv").read_text()

    def test_build_banks_writes_samples(self, workdir):
        res = run_cli(
            ["build-banks", "--config", "cfg.json", "--sino", "noisy.fct", "--outdir", "banks"],
            workdir,
        )
        assert res.returncode == 0
        assert (workdir / "banks" / "sample_noise_0.fct").exists()
        assert (workdir / "banks" / "sample_mask_1.fct").exists()

    def test_validate_config_exit_codes(self, workdir):
        ok = run_cli(["validate-config", "--config", "cfg.json"], workdir)
        assert ok.returncode == 0
        bad = run_cli(
            ["validate-config", "--config", "cfg.json", "--perturb.r1", "0.9"], workdir
        )
        assert bad.returncode == 1
        assert "invariant" in bad.stderr

    def test_usage_error_is_exit_one(self, workdir):
        res = run_cli(["no-such-command"], workdir)
        assert res.returncode == 1

    def test_missing_file_is_exit_two(self, workdir):
        res = run_cli(["fbp", "--config", "cfg.json", "--sino", "missing.fct", "--out", "x.fct"], workdir)
        assert res.returncode == 2

    def test_run_all_cli(self, workdir):
        res = run_cli(["run-all", "--config", "cfg.json"], workdir)
        assert res.returncode == 0
        assert (workdir / "out" / "manifest.json").exists()
        assert "psnr noisy" in res.stdout

    def test_variance_experiment_cli(self, workdir):
        res = run_cli(
            ["experiment", "variance", "--config", "cfg.json", "--outdir", "var",
             "--p-values", "0,1", "--reps", "2000"],
            workdir,
        )
        assert res.returncode == 0
        text = (workdir / "var" / "variance.csv").read_text()
        assert text.startswith("p,empirical_var,predicted_var\n")
        assert (workdir / "var" / "variance.png").exists()

    def test_pca_experiment_cli(self, workdir):
        res = run_cli(["experiment", "pca", "--config", "cfg.json", "--outdir", "pca"], workdir)
        assert res.returncode == 0
        assert (workdir / "pca" / "pca_raw.csv").exists()
        assert (workdir / "pca" / "pca_clamped.csv").exists()
        assert (workdir / "pca" / "pca_raw.png").exists()

    def test_autocorr_experiment_cli(self, workdir):
        res = run_cli(
            ["experiment", "autocorr", "--config", "cfg.json", "--outdir", "ac", "--max-lag", "5"],
            workdir,
        )
        assert res.returncode == 0
        assert (workdir / "ac" / "autocorr_ldct.csv").exists()
        assert (workdir / "ac" / "autocorr.png").exists()
