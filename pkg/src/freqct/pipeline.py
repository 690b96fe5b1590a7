"""End-to-end orchestration: phantom -> projection -> low-dose simulation
-> zero-shot training -> sinogram denoising -> reconstruction -> metrics,
with resolved-config manifests that make every run reproducible.

Config resolution: profile defaults (desk or paper), deep-merged with the
config file, then dotted CLI overrides. Per-stage RNG streams derive from
the run seed XOR a fixed stage tag so adding a stage never perturbs the
draws of earlier ones.

The manifest lists every data artifact with a sha256 checksum; two runs
with the same resolved config produce identical checksum maps. Figures
are listed without checksums (byte-stable PNG output is not a contract
the plotting stack makes). A manifest is written even when a stage fails,
with the error recorded.
"""

from __future__ import annotations

import copy
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import figures
from .denoiser import TrainConfig, infer, save_net, train
from .errors import ConfigError, PipelineError
from .grid import Grid2D, export_pgm, write_csv, write_tensor
from .metrics import MetricConfig, Roi, psnr, rmse, snr_cnr, ssim, write_metrics_csv
from .noise import NoiseModel, simulate_ldct
from .pseudosample import PerturbConfig
from .rng import RngStream
from .tomo import ScanGeometry, fbp, radon, shepp_logan

# Stage tags for per-stage seed derivation (seed XOR tag).
TAG_NOISE = int.from_bytes(b"noisesim", "little")
TAG_TRAIN = int.from_bytes(b"trainnet", "little")

PROFILE_DEFAULTS: dict[str, dict] = {
    "desk": {
        "seed": 0,
        "output_dir": "runs/desk",
        "geometry": {"n_angles": 180, "n_detectors": 185, "detector_spacing": 1.0, "image_size": 128},
        "noise": {
            "i0_full": 1e5,
            "dose": 0.10,
            "gaussian_sigma": 0.0,
            "floor_counts": 0.5,
            "target_p_max": 12.0,
        },
        "perturb": {"r1": 0.5, "r2": 0.6, "beta": 0.5, "z_delta": 0.8, "n": 4, "clamp_t": 1.0},
        "train": {
            "steps": 200,
            "lr": 1e-3,
            "hidden_channels": 32,
            "scale_quantile": 0.99,
            "use_clamp": True,
            "final_relu": True,
            "decay_start": 0.6,
            "final_lr_frac": 0.1,
        },
        "metrics": {"data_range": None, "window_lo": None, "window_hi": None},
        "fbp_hann": False,
        "save_banks": False,
    },
    "paper": {
        "seed": 0,
        "output_dir": "runs/paper",
        "geometry": {"n_angles": 1440, "n_detectors": 720, "detector_spacing": 1.0, "image_size": 512},
        "noise": {
            "i0_full": 1e5,
            "dose": 0.10,
            "gaussian_sigma": 0.0,
            "floor_counts": 0.5,
            "target_p_max": 12.0,
        },
        "perturb": {"r1": 0.5, "r2": 0.6, "beta": 0.5, "z_delta": 0.8, "n": 4, "clamp_t": 1.0},
        "train": {
            "steps": 1500,
            "lr": 1e-3,
            "hidden_channels": 64,
            "scale_quantile": 0.99,
            "use_clamp": True,
            "final_relu": True,
            "decay_start": 0.6,
            "final_lr_frac": 0.1,
        },
        "metrics": {"data_range": None, "window_lo": None, "window_hi": None},
        "fbp_hann": False,
        "save_banks": False,
    },
}

_LEAF_TYPES = {
    "seed": int,
    "output_dir": str,
    "fbp_hann": bool,
    "save_banks": bool,
    "geometry.n_angles": int,
    "geometry.n_detectors": int,
    "geometry.detector_spacing": float,
    "geometry.image_size": int,
    "noise.i0_full": float,
    "noise.dose": float,
    "noise.gaussian_sigma": float,
    "noise.floor_counts": float,
    "noise.target_p_max": float,
    "perturb.r1": float,
    "perturb.r2": float,
    "perturb.beta": float,
    "perturb.z_delta": float,
    "perturb.n": int,
    "perturb.clamp_t": float,
    "train.steps": int,
    "train.lr": float,
    "train.hidden_channels": int,
    "train.scale_quantile": float,
    "train.use_clamp": bool,
    "train.final_relu": bool,
    "train.decay_start": float,
    "train.final_lr_frac": float,
    "metrics.data_range": float,
    "metrics.window_lo": float,
    "metrics.window_hi": float,
}


def parse_override(path: str, text: str):
    """Parse a dotted-path CLI override into its typed value."""
    if path not in _LEAF_TYPES:
        raise ConfigError(f"unknown config field '{path}'")
    kind = _LEAF_TYPES[path]
    if text.lower() in ("null", "none"):
        return None
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"'{path}' expects a boolean, got {text!r}")
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"'{path}' expects {kind.__name__}, got {text!r}") from exc


@dataclass
class RunConfig:
    """Fully resolved run configuration."""

    profile: str
    raw: dict
    warnings: list[str] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    @property
    def geometry(self) -> ScanGeometry:
        g = self.raw["geometry"]
        return ScanGeometry(
            n_angles=g["n_angles"],
            n_detectors=g["n_detectors"],
            detector_spacing=g["detector_spacing"],
            image_size=g["image_size"],
        )

    @property
    def noise_model(self) -> NoiseModel:
        n = self.raw["noise"]
        return NoiseModel(
            i0=n["i0_full"] * n["dose"],
            gaussian_sigma=n["gaussian_sigma"],
            floor_counts=n["floor_counts"],
        )

    @property
    def perturb(self) -> PerturbConfig:
        p = self.raw["perturb"]
        return PerturbConfig(
            r1=p["r1"], r2=p["r2"], beta=p["beta"], z_delta=p["z_delta"],
            n=p["n"], clamp_t=p["clamp_t"],
        )

    @property
    def train_config(self) -> TrainConfig:
        t = self.raw["train"]
        return TrainConfig(
            steps=t["steps"],
            lr=t["lr"],
            hidden_channels=t["hidden_channels"],
            perturb=self.perturb,
            scale_quantile=t["scale_quantile"],
            use_clamp=t["use_clamp"],
            final_relu=t["final_relu"],
            decay_start=t["decay_start"],
            final_lr_frac=t["final_lr_frac"],
        )

    @property
    def metric_config(self) -> MetricConfig:
        m = self.raw["metrics"]
        return MetricConfig(
            data_range=m["data_range"], window_lo=m["window_lo"], window_hi=m["window_hi"]
        )

    def canonical_json(self, drop: tuple[str, ...] = ()) -> str:
        cfg = copy.deepcopy(self.raw)
        cfg["profile"] = self.profile
        cfg.pop("output_dir", None)  # relocation must not change identity
        for dotted in drop:
            parts = dotted.split(".")
            node = cfg
            for p in parts[:-1]:
                node = node[p]
            node.pop(parts[-1], None)
        return json.dumps(cfg, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def config_hash_without_clamp(self) -> str:
        return hashlib.sha256(
            self.canonical_json(drop=("train.use_clamp",)).encode()
        ).hexdigest()

    def with_overrides(self, **kw) -> "RunConfig":
        """Derived config for sweeps; keys are shorthand leaf names."""
        paths = {
            "seed": "seed",
            "output_dir": "output_dir",
            "use_clamp": "train.use_clamp",
            "steps": "train.steps",
            "n": "perturb.n",
            "beta": "perturb.beta",
            "z_delta": "perturb.z_delta",
            "r1": "perturb.r1",
            "r2": "perturb.r2",
        }
        raw = copy.deepcopy(self.raw)
        for key, value in kw.items():
            if key not in paths:
                raise ConfigError(f"with_overrides: unknown key {key!r}")
            parts = paths[key].split(".")
            node = raw
            for p in parts[:-1]:
                node = node[p]
            node[parts[-1]] = value
        cfg = RunConfig(self.profile, raw)
        errors = validate_config(cfg)
        if errors:
            raise ConfigError("; ".join(errors))
        return cfg


def _deep_merge(base: dict, extra: dict, prefix: str = "") -> list[str]:
    """Merge extra into base in place; returns unknown-key diagnostics."""
    problems = []
    for key, value in extra.items():
        path = f"{prefix}{key}"
        if key not in base:
            problems.append(f"unknown config field '{path}'")
            continue
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                problems.append(f"'{path}' must be an object")
                continue
            problems.extend(_deep_merge(base[key], value, prefix=f"{path}."))
        else:
            base[key] = value
    return problems


def resolve_config(
    file_config: dict | None = None,
    overrides: dict[str, object] | None = None,
    profile: str | None = None,
) -> RunConfig:
    """Profile defaults <- config file <- dotted overrides."""
    file_config = dict(file_config or {})
    prof = profile or file_config.pop("profile", None) or "desk"
    if prof not in PROFILE_DEFAULTS:
        raise ConfigError(f"unknown profile {prof!r} (expected desk or paper)")
    raw = copy.deepcopy(PROFILE_DEFAULTS[prof])
    warnings_list: list[str] = []
    if "seed" not in file_config and (overrides is None or "seed" not in overrides):
        warnings_list.append("seed not specified; defaulting to 0")
    problems = _deep_merge(raw, file_config)
    if problems:
        raise ConfigError("; ".join(problems))
    for dotted, value in (overrides or {}).items():
        if dotted not in _LEAF_TYPES:
            raise ConfigError(f"unknown config field '{dotted}'")
        node = raw
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = value
    cfg = RunConfig(prof, raw, warnings_list)
    errors = validate_config(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    return cfg


def validate_config(cfg: RunConfig) -> list[str]:
    """Full invariant check; returns one diagnostic per violated field."""
    errors = []
    r = cfg.raw
    if r["seed"] < 0:
        errors.append("seed: must be a non-negative integer")
    p = r["perturb"]
    if not 0 < p["r1"] <= p["r2"]:
        errors.append("perturb: PerturbConfig invariant 0 < r1 <= r2 violated "
                      f"(r1={p['r1']}, r2={p['r2']})")
    if p["r2"] > float(np.sqrt(2.0)) + 1e-12:
        errors.append("perturb.r2: exceeds sqrt(2), outside the normalized frequency disc")
    if not 0 <= p["beta"] <= 1:
        errors.append("perturb.beta: retention probability must be in [0, 1]")
    if not 0 < p["z_delta"] <= 1:
        errors.append("perturb.z_delta: half-width must be in (0, 1]")
    if p["n"] < 1:
        errors.append("perturb.n: bank size must be >= 1")
    if p["clamp_t"] <= 0:
        errors.append("perturb.clamp_t: truncation ceiling must be > 0")
    n = r["noise"]
    if n["i0_full"] <= 0 or not 0 < n["dose"] <= 1:
        errors.append("noise: need i0_full > 0 and dose in (0, 1]")
    if n["gaussian_sigma"] < 0:
        errors.append("noise.gaussian_sigma: must be >= 0")
    if not 0 < n["floor_counts"] <= 1:
        errors.append("noise.floor_counts: must be in (0, 1]")
    if n["target_p_max"] is not None and n["target_p_max"] <= 0:
        errors.append("noise.target_p_max: must be > 0 (or null to disable scaling)")
    t = r["train"]
    if t["steps"] < 1 or t["lr"] <= 0 or t["hidden_channels"] < 1:
        errors.append("train: need steps >= 1, lr > 0, hidden_channels >= 1")
    if not 0 < t["scale_quantile"] <= 1:
        errors.append("train.scale_quantile: must be in (0, 1]")
    g = r["geometry"]
    if g["n_angles"] < 1 or g["n_detectors"] < 1 or g["detector_spacing"] <= 0:
        errors.append("geometry: angles/detectors must be positive, spacing > 0")
    elif g["n_detectors"] * g["detector_spacing"] < g["image_size"]:
        errors.append("geometry: detector span does not cover the image")
    if g["image_size"] < 16:
        errors.append("geometry.image_size: must be >= 16")
    m = r["metrics"]
    if (m["window_lo"] is None) != (m["window_hi"] is None):
        errors.append("metrics: window_lo and window_hi must be set together")
    elif m["window_lo"] is not None and m["window_hi"] <= m["window_lo"]:
        errors.append("metrics: window_hi must exceed window_lo")
    if m["data_range"] is not None and m["data_range"] <= 0:
        errors.append("metrics.data_range: must be > 0")
    return errors


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def phantom_rois(size: int) -> tuple[Roi, Roi]:
    """Signal ROI in the upper ellipse region, background in lower brain
    tissue; fractions of the unit phantom geometry."""
    c = (size - 1) / 2.0
    half = max(2, int(round(0.06 * c)))
    sig_r = int(round(c - 0.35 * c))
    bg_r = int(round(c + 0.35 * c))
    col = int(round(c))
    sig = Roi(sig_r - half, col - half, 2 * half, 2 * half)
    bg = Roi(bg_r - half, col - half, 2 * half, 2 * half)
    return sig, bg


def run_all(cfg: RunConfig) -> dict:
    """Execute the whole pipeline, write artifacts + manifest, return the
    manifest dict. On stage failure a partial manifest (with the error) is
    still written before the PipelineError propagates."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "schema": "freqct-run-manifest-v1",
        "profile": cfg.profile,
        "config": copy.deepcopy(cfg.raw),
        "config_hash": cfg.config_hash(),
        "stages": [],
        "artifacts": [],
        "figures": [],
        "metrics": {},
        "error": None,
    }
    artifacts: list[Path] = []
    figure_paths: list[Path] = []

    def record(path: Path):
        artifacts.append(path)

    def staged(name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            manifest["error"] = {"stage": name, "message": str(exc)}
            _finalize_manifest(manifest, out, artifacts, figure_paths)
            raise PipelineError(name, str(exc)) from exc
        manifest["stages"].append({"name": name, "seconds": time.perf_counter() - t0})
        return result

    geom = cfg.geometry
    model = cfg.noise_model
    base_meta = {"seed": cfg.seed, "config_hash": cfg.config_hash()}

    def stage_phantom():
        img = shepp_logan(geom.image_size)
        write_tensor(Grid2D(img, "image", dict(base_meta)), out / "phantom.fct")
        record(out / "phantom.fct")
        return img

    phantom = staged("phantom", stage_phantom)

    def stage_project():
        sino = radon(phantom, geom)
        target = cfg.raw["noise"]["target_p_max"]
        if target is not None and sino.max() > 0:
            sino = sino * (target / sino.max())
        meta = dict(base_meta)
        meta.update({"n_angles": geom.n_angles, "n_detectors": geom.n_detectors,
                     "target_p_max": target})
        write_tensor(Grid2D(sino, "sinogram", meta), out / "sino_clean.fct")
        record(out / "sino_clean.fct")
        return sino

    sino_clean = staged("project", stage_project)

    def stage_noise():
        rng = RngStream(cfg.seed ^ TAG_NOISE)
        noisy = simulate_ldct(sino_clean, model, rng)
        meta = dict(base_meta)
        meta.update({"i0": model.i0, "gaussian_sigma": model.gaussian_sigma,
                     "floor_counts": model.floor_counts,
                     "poisson_sampler": "inversion<30|normal-approx>=30"})
        write_tensor(Grid2D(noisy, "sinogram", meta), out / "sino_noisy.fct")
        record(out / "sino_noisy.fct")
        return noisy

    sino_noisy = staged("simulate-noise", stage_noise)

    def stage_train():
        rng = RngStream(cfg.seed ^ TAG_TRAIN)
        # measured attenuation is non-negative; clip the log-domain artifacts
        sino_input = np.maximum(sino_noisy, 0.0)
        net, s, losses = train(sino_input, cfg.train_config, rng)
        save_net(net, s, out / "net", extra_meta={"config_hash": cfg.config_hash()})
        for i in range(len(net.weights)):
            record(out / "net" / f"layer_{i}.fct")
        record(out / "net" / "net.json")
        write_csv(out / "loss_history.csv", ["step", "loss"],
                  [(i + 1, v) for i, v in enumerate(losses)])
        record(out / "loss_history.csv")
        figure_paths.append(Path(figures.render_loss_curve(out / "loss_curve.png", losses)))
        return net, s, losses, sino_input

    net, scale_s, losses, sino_input = staged("train", stage_train)

    def stage_denoise():
        den = infer(net, sino_input, scale_s)
        meta = dict(base_meta)
        meta["scale_s"] = scale_s
        write_tensor(Grid2D(den, "sinogram", meta), out / "sino_denoised.fct")
        record(out / "sino_denoised.fct")
        return den

    sino_denoised = staged("denoise", stage_denoise)

    def stage_fbp():
        recons = {}
        for name, sino in (("clean", sino_clean), ("noisy", sino_noisy), ("denoised", sino_denoised)):
            rec = fbp(sino, geom, hann=cfg.raw["fbp_hann"])
            recons[name] = rec
            write_tensor(Grid2D(rec, "image", dict(base_meta)), out / f"recon_{name}.fct")
            record(out / f"recon_{name}.fct")
        window = (float(recons["clean"].min()), float(recons["clean"].max()))
        for name, rec in recons.items():
            export_pgm(Grid2D(rec, "image"), out / f"recon_{name}.pgm", window)
            record(out / f"recon_{name}.pgm")
        figure_paths.append(Path(figures.render_recon_panel(
            out / "recon_panel.png",
            {"reference (clean FBP)": recons["clean"],
             "noisy FBP": recons["noisy"],
             "denoised": recons["denoised"]},
            window,
        )))
        return recons

    recons = staged("fbp", stage_fbp)

    def stage_metrics():
        mc = cfg.metric_config
        ref = recons["clean"]
        sig_roi, bg_roi = phantom_rois(geom.image_size)
        vals = {"scale_s": scale_s, "final_loss": losses[-1]}
        for name in ("noisy", "denoised"):
            img = recons[name]
            vals[f"psnr_{name}"] = psnr(ref, img, mc)
            vals[f"ssim_{name}"] = ssim(ref, img, mc)
            vals[f"rmse_{name}"] = rmse(ref, img, mc)
            snr_v, cnr_v = snr_cnr(img, sig_roi, bg_roi)
            vals[f"snr_{name}"] = snr_v
            vals[f"cnr_{name}"] = cnr_v
        write_metrics_csv(out / "metrics.csv", vals)
        record(out / "metrics.csv")
        return vals

    manifest["metrics"] = staged("metrics", stage_metrics)
    _finalize_manifest(manifest, out, artifacts, figure_paths)
    return manifest


def _finalize_manifest(manifest: dict, out: Path, artifacts: list[Path], figs: list[Path]):
    manifest["artifacts"] = [
        {
            "path": str(p.relative_to(out)),
            "sha256": _sha256(p),
            "bytes": p.stat().st_size,
        }
        for p in artifacts
        if p.exists()
    ]
    manifest["figures"] = [
        {"path": str(p.relative_to(out)), "bytes": p.stat().st_size} for p in figs if p.exists()
    ]
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
