"""Matplotlib renderers for run reports and experiment figures.

Every renderer writes a PNG next to the delimited output it illustrates
and returns the path. The Agg backend is forced so rendering works
headless; figures carry no timestamps, but they are listed without
checksums in run manifests because byte-identical PNG output is not a
contract the plotting stack makes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path) -> str:
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def render_recon_panel(path, images: dict, window: tuple[float, float]) -> str:
    """Side-by-side reconstructions with a shared display window."""
    lo, hi = window
    fig, axes = plt.subplots(1, len(images), figsize=(4 * len(images), 4))
    if len(images) == 1:
        axes = [axes]
    for ax, (title, img) in zip(axes, images.items()):
        ax.imshow(img, cmap="gray", vmin=lo, vmax=hi, interpolation="nearest")
        ax.set_title(title)
        ax.axis("off")
    return _save(fig, path)


def render_loss_curve(path, losses) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(np.arange(1, len(losses) + 1), losses)
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def render_variance_fit(path, rows) -> str:
    """Monte-Carlo variances against the exponential prediction."""
    p = np.array([r[0] for r in rows])
    emp = np.array([r[1] for r in rows])
    pred = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(p, emp, "o", label="empirical")
    ax.semilogy(p, pred, "-", label="exp(p)/i0")
    ax.set_xlabel("clean projection value p")
    ax.set_ylabel("variance of noisy observation")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def render_embedding(path, points) -> str:
    """2D scatter of embedding points, colored by label prefix."""
    fig, ax = plt.subplots(figsize=(5, 5))
    prefixes = sorted({p.label.split("_")[0] for p in points})
    colors = plt.cm.tab10(np.linspace(0, 1, max(len(prefixes), 2)))
    for prefix, color in zip(prefixes, colors):
        xs = [p.coords[0] for p in points if p.label.startswith(prefix)]
        ys = [p.coords[1] if len(p.coords) > 1 else 0.0 for p in points if p.label.startswith(prefix)]
        ax.scatter(xs, ys, label=prefix, color=color)
    ax.set_xlabel("pc1")
    ax.set_ylabel("pc2")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def render_autocorr(path, tables: dict) -> str:
    """Central row-lag profiles of one or more autocorrelation tables."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, rows in tables.items():
        lags = sorted((dr, c) for dr, dc, c in rows if dc == 0)
        ax.plot([l for l, _ in lags], [c for _, c in lags], marker="o", label=name)
    ax.set_xlabel("row lag")
    ax.set_ylabel("normalized correlation")
    ax.axhline(0.0, color="k", lw=0.5)
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def render_sweep(path, rows, x_label: str) -> str:
    """PSNR of the denoised reconstruction across sweep values."""
    fig, ax = plt.subplots(figsize=(6, 4))
    values = [str(r["value"]) for r in rows]
    psnr = [r["psnr_denoised"] for r in rows]
    base = [r["psnr_noisy"] for r in rows]
    x = np.arange(len(rows))
    ax.plot(x, psnr, "o-", label="denoised")
    ax.plot(x, base, "s--", label="noisy FBP")
    ax.set_xticks(x)
    ax.set_xticklabels(values, rotation=30)
    ax.set_xlabel(x_label)
    ax.set_ylabel("PSNR (dB)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _save(fig, path)
