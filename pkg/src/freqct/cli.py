"""Subcommand CLI: every pipeline stage standalone plus the experiment
suite and the end-to-end runner.

Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric error.
FREQCT_THREADS caps worker threads (translated to the BLAS/OpenMP pools).
"""

from __future__ import annotations

import os

# Thread caps must land in the environment before numpy loads its BLAS.
_threads = os.environ.get("FREQCT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, figures
from .denoiser import infer, load_net, save_net, train
from .errors import ConfigError, FreqctError
from .grid import Grid2D, read_tensor, write_csv, write_tensor
from .metrics import MetricConfig, Roi, psnr, rmse, snr_cnr, ssim, write_metrics_csv
from .noise import variance_experiment, write_variance_csv
from .pipeline import (
    PROFILE_DEFAULTS,
    TAG_NOISE,
    TAG_TRAIN,
    RunConfig,
    _LEAF_TYPES,
    parse_override,
    resolve_config,
    run_all,
    validate_config,
)
from .pseudosample import build_banks, clamp_bank
from .rng import RngStream
from .noise import simulate_ldct
from .tomo import fbp, radon, shepp_logan


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are exit code 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--profile", choices=sorted(PROFILE_DEFAULTS), help="defaults profile")
    for dotted in sorted(_LEAF_TYPES):
        p.add_argument(f"--{dotted}", dest=dotted.replace(".", "__"), metavar="V")


def _load_config(args) -> RunConfig:
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(args.config.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{args.config}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    overrides = {}
    for dotted in _LEAF_TYPES:
        text = getattr(args, dotted.replace(".", "__"), None)
        if text is not None:
            overrides[dotted] = parse_override(dotted, text)
    cfg = resolve_config(file_cfg, overrides, profile=args.profile)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return cfg


def _read_sino(path) -> np.ndarray:
    return np.array(read_tensor(path).data)


def cmd_phantom(args):
    cfg = _load_config(args)
    img = shepp_logan(cfg.geometry.image_size)
    write_tensor(Grid2D(img, "image", {"seed": cfg.seed}), args.out)
    print(f"wrote {args.out}")


def cmd_project(args):
    cfg = _load_config(args)
    image = np.array(read_tensor(args.image).data)
    sino = radon(image, cfg.geometry)
    target = cfg.raw["noise"]["target_p_max"]
    if args.scale_max and target is not None and sino.max() > 0:
        sino = sino * (target / sino.max())
    write_tensor(Grid2D(sino, "sinogram", {"target_p_max": target if args.scale_max else None}), args.out)
    print(f"wrote {args.out}")


def cmd_simulate_noise(args):
    cfg = _load_config(args)
    clean = _read_sino(args.sino)
    noisy = simulate_ldct(clean, cfg.noise_model, RngStream(cfg.seed ^ TAG_NOISE))
    write_tensor(
        Grid2D(noisy, "sinogram", {"i0": cfg.noise_model.i0, "seed": cfg.seed}), args.out
    )
    print(f"wrote {args.out}")


def cmd_build_banks(args):
    cfg = _load_config(args)
    sino = _read_sino(args.sino)
    rng = RngStream(cfg.seed ^ TAG_TRAIN)
    noise_bank, mask_bank = build_banks(sino, cfg.perturb, rng)
    if args.clamp:
        noise_bank = clamp_bank(noise_bank, cfg.perturb.clamp_t)
        mask_bank = clamp_bank(mask_bank, cfg.perturb.clamp_t)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for bank in (noise_bank, mask_bank):
        for i, sample in enumerate(bank.samples):
            meta = {k: str(v) for k, v in bank.source_meta.items()}
            write_tensor(Grid2D(sample, "sinogram", meta), outdir / f"sample_{bank.kind}_{i}.fct")
    print(f"wrote {2 * cfg.perturb.n} samples to {outdir}")


def cmd_train(args):
    cfg = _load_config(args)
    sino = np.maximum(_read_sino(args.sino), 0.0)
    net, s, losses = train(sino, cfg.train_config, RngStream(cfg.seed ^ TAG_TRAIN))
    save_net(net, s, args.outdir, extra_meta={"config_hash": cfg.config_hash()})
    write_csv(Path(args.outdir) / "loss_history.csv", ["step", "loss"],
              [(i + 1, v) for i, v in enumerate(losses)])
    print(f"trained {cfg.train_config.steps} steps; scale {s:.6g}; final loss {losses[-1]:.6g}")


def cmd_denoise(args):
    net, s = load_net(args.net)
    sino = np.maximum(_read_sino(args.sino), 0.0)
    den = infer(net, sino, s)
    write_tensor(Grid2D(den, "sinogram", {"scale_s": s}), args.out)
    print(f"wrote {args.out}")


def cmd_fbp(args):
    cfg = _load_config(args)
    sino = _read_sino(args.sino)
    rec = fbp(sino, cfg.geometry, hann=cfg.raw["fbp_hann"])
    write_tensor(Grid2D(rec, "image"), args.out)
    print(f"wrote {args.out}")


def _parse_roi(text: str) -> Roi:
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 4:
        raise ConfigError(f"ROI must be row0,col0,rows,cols, got {text!r}")
    return Roi(*parts)


def cmd_metrics(args):
    cfg = _load_config(args)
    ref = np.array(read_tensor(args.ref).data)
    test = np.array(read_tensor(args.test).data)
    mc = cfg.metric_config
    vals = {
        "psnr": psnr(ref, test, mc),
        "ssim": ssim(ref, test, mc),
        "rmse": rmse(ref, test, mc),
    }
    if args.roi and args.background:
        snr_v, cnr_v = snr_cnr(test, _parse_roi(args.roi), _parse_roi(args.background))
        vals["snr"] = snr_v
        vals["cnr"] = cnr_v
    write_metrics_csv(args.out, vals)
    for name, value in sorted(vals.items()):
        print(f"{name}: {value}")


def cmd_run_all(args):
    cfg = _load_config(args)
    manifest = run_all(cfg)
    m = manifest["metrics"]
    print(f"run complete: {cfg.output_dir / 'manifest.json'}")
    print(f"psnr noisy {m['psnr_noisy']:.2f} dB -> denoised {m['psnr_denoised']:.2f} dB")
    print(f"ssim noisy {m['ssim_noisy']:.4f} -> denoised {m['ssim_denoised']:.4f}")


def cmd_validate_config(args):
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        sys.exit(1)
    errors = validate_config(cfg)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    if errors:
        sys.exit(1)
    g = cfg.geometry
    print(f"valid ({cfg.profile} profile): geometry {g.n_angles}x{g.n_detectors}, "
          f"image {g.image_size}, seed {cfg.seed}")
    print(json.dumps(cfg.raw, indent=2, sort_keys=True))


def _experiment_context(cfg: RunConfig):
    """Clean/noisy sinogram pair the diagnostics run on, from the config's
    phantom and geometry (kept identical to the pipeline stages)."""
    phantom = shepp_logan(cfg.geometry.image_size)
    sino = radon(phantom, cfg.geometry)
    target = cfg.raw["noise"]["target_p_max"]
    if target is not None and sino.max() > 0:
        sino = sino * (target / sino.max())
    noisy = simulate_ldct(sino, cfg.noise_model, RngStream(cfg.seed ^ TAG_NOISE))
    return sino, noisy


def cmd_experiment_variance(args):
    cfg = _load_config(args)
    p_values = [float(v) for v in args.p_values.split(",")]
    rows = variance_experiment(
        p_values, cfg.noise_model.i0, args.reps, RngStream(cfg.seed ^ TAG_NOISE)
    )
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_variance_csv(outdir / "variance.csv", rows)
    figures.render_variance_fit(outdir / "variance.png", rows)
    print(f"wrote {outdir / 'variance.csv'} and variance.png")


def cmd_experiment_pca(args):
    cfg = _load_config(args)
    sino, noisy = _experiment_context(cfg)
    s = float(np.quantile(np.maximum(noisy, 0.0), cfg.train_config.scale_quantile))
    p_norm = np.maximum(noisy, 0.0) / s
    rng = RngStream(cfg.seed ^ TAG_TRAIN)
    noise_bank, mask_bank = build_banks(p_norm, cfg.perturb, rng)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for tag, clamped in (("raw", False), ("clamped", True)):
        nb, mb = noise_bank, mask_bank
        if clamped:
            nb = clamp_bank(nb, cfg.perturb.clamp_t)
            mb = clamp_bank(mb, cfg.perturb.clamp_t)
        samples = list(nb.samples) + list(mb.samples) + [p_norm, sino / s]
        labels = (
            [f"noise_{i}" for i in range(len(nb.samples))]
            + [f"mask_{i}" for i in range(len(mb.samples))]
            + ["source", "reference"]
        )
        points = analysis.pca_embed(samples, k=2, labels=labels)
        analysis.write_embedding_csv(outdir / f"pca_{tag}.csv", points)
        figures.render_embedding(outdir / f"pca_{tag}.png", points)
        sil = analysis.silhouette_two_groups(
            points,
            lambda lbl: lbl.split("_")[0] if lbl.startswith(("noise", "mask")) else None,
        )
        print(f"pca ({tag}): bank silhouette {sil:.3f} -> {outdir / f'pca_{tag}.csv'}")


def cmd_experiment_autocorr(args):
    cfg = _load_config(args)
    sino, noisy = _experiment_context(cfg)
    s = float(np.quantile(np.maximum(noisy, 0.0), cfg.train_config.scale_quantile))
    p_norm = np.maximum(noisy, 0.0) / s
    rng = RngStream(cfg.seed ^ TAG_TRAIN)
    noise_bank, _ = build_banks(p_norm, cfg.perturb, rng)
    clamped = clamp_bank(noise_bank, cfg.perturb.clamp_t)
    tables = {
        "ldct": analysis.residual_autocorr(noisy, sino, args.max_lag),
        "pseudo_raw": analysis.residual_autocorr(noise_bank.samples[0] * s, sino, args.max_lag),
        "pseudo_clamped": analysis.residual_autocorr(
            np.minimum(clamped.samples[0] * s, sino.max()), sino, args.max_lag
        ),
    }
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, rows in tables.items():
        analysis.write_autocorr_csv(outdir / f"autocorr_{name}.csv", rows)
        print(f"{name}: mean |corr| off-center {analysis.mean_abs_offcenter(rows):.4f}")
    figures.render_autocorr(outdir / "autocorr.png", tables)


def cmd_experiment_ablation(args):
    cfg = _load_config(args)
    seeds = [int(v) for v in args.seeds.split(",")]
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    def run_fn(sub_cfg):
        label = f"seed{sub_cfg.seed}_{'clamp' if sub_cfg.raw['train']['use_clamp'] else 'noclamp'}"
        return run_all(sub_cfg.with_overrides(output_dir=str(outdir / label)))

    rows = analysis.truncation_ablation(cfg, seeds, run_fn)
    header = list(rows[0].keys())
    write_csv(outdir / "ablation.csv", header, [[r[k] for k in header] for r in rows])
    for objective in ("full_range", "clamped"):
        vals = [r["psnr_denoised"] for r in rows if r["objective"] == objective]
        print(f"{objective}: mean psnr {np.mean(vals):.2f} +- {np.std(vals):.2f} dB")
    print(f"wrote {outdir / 'ablation.csv'}")


def cmd_experiment_sweep(args):
    cfg = _load_config(args)
    seeds = [int(v) for v in args.seeds.split(",")]
    if args.param == "r_range":
        values = []
        for pair in args.values.split(","):
            lo, hi = pair.split(":")
            values.append((float(lo), float(hi)))
    elif args.param == "n":
        values = [int(v) for v in args.values.split(",")]
    else:
        values = [float(v) for v in args.values.split(",")]
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    def run_fn(sub_cfg):
        tag = f"{args.param}_{sub_cfg.config_hash()[:8]}_seed{sub_cfg.seed}"
        return run_all(sub_cfg.with_overrides(output_dir=str(outdir / tag)))

    rows = analysis.hyperparam_sweep(cfg, args.param, values, seeds, run_fn)
    header = list(rows[0].keys())
    write_csv(outdir / "sweep.csv", header, [[r[k] for k in header] for r in rows])
    figures.render_sweep(outdir / "sweep.png", rows, args.param)
    spread = max(r["psnr_denoised"] for r in rows) - min(r["psnr_denoised"] for r in rows)
    print(f"wrote {outdir / 'sweep.csv'}; psnr spread {spread:.2f} dB")


def build_parser() -> _Parser:
    parser = _Parser(prog="freqct", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, configured=True):
        p = sub.add_parser(name)
        if configured:
            _add_config_args(p)
        p.set_defaults(fn=fn)
        return p

    p = add("phantom", cmd_phantom)
    p.add_argument("--out", type=Path, required=True)

    p = add("project", cmd_project)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--scale-max", action="store_true",
                   help="rescale so the max equals noise.target_p_max")

    p = add("simulate-noise", cmd_simulate_noise)
    p.add_argument("--sino", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("build-banks", cmd_build_banks)
    p.add_argument("--sino", type=Path, required=True)
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--clamp", action="store_true")

    p = add("train", cmd_train)
    p.add_argument("--sino", type=Path, required=True)
    p.add_argument("--outdir", type=Path, required=True)

    p = add("denoise", cmd_denoise, configured=False)
    p.add_argument("--sino", type=Path, required=True)
    p.add_argument("--net", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("fbp", cmd_fbp)
    p.add_argument("--sino", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("metrics", cmd_metrics)
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--roi", help="row0,col0,rows,cols")
    p.add_argument("--background", help="row0,col0,rows,cols")

    p = add("run-all", cmd_run_all)
    p = add("validate-config", cmd_validate_config)

    exp = sub.add_parser("experiment")
    exp_sub = exp.add_subparsers(dest="experiment", required=True)

    def add_exp(name, fn):
        p = exp_sub.add_parser(name)
        _add_config_args(p)
        p.add_argument("--outdir", type=Path, required=True)
        p.set_defaults(fn=fn)
        return p

    p = add_exp("variance", cmd_experiment_variance)
    p.add_argument("--p-values", default="0,0.5,1,1.5,2,2.5,3,3.5,4")
    p.add_argument("--reps", type=int, default=100_000)

    add_exp("pca", cmd_experiment_pca)

    p = add_exp("autocorr", cmd_experiment_autocorr)
    p.add_argument("--max-lag", type=int, default=10)

    p = add_exp("ablation", cmd_experiment_ablation)
    p.add_argument("--seeds", default="1,2,3")

    p = add_exp("sweep", cmd_experiment_sweep)
    p.add_argument("--param", choices=("n", "r_range", "beta", "z_delta"), required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--seeds", default="1")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FreqctError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
