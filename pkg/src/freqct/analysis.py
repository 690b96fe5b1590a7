"""Diagnostic experiments: PCA embedding of sample banks, residual
autocorrelation before/after truncation, the truncation ablation, and
hyperparameter sweeps.

PCA uses the Gram-matrix trick (sample count << dimension, so the small
eigenproblem is exact and cheap). Qualitative claims (cluster separation,
correlation reduction) are reported as statistics; only their direction
is asserted by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np

from .grid import write_csv


@dataclass
class EmbeddingPoint:
    label: str
    coords: np.ndarray


def pca_embed(samples: list[np.ndarray], k: int, labels: list[str] | None = None) -> list[EmbeddingPoint]:
    """Project flattened grids onto their top-k principal components.

    Sign convention: each component's entry of largest absolute value is
    made positive, so embeddings are reproducible across runs.
    """
    if len(samples) < 2:
        raise ValueError("PCA needs at least 2 samples")
    shapes = {s.shape for s in samples}
    if len(shapes) > 1:
        raise ValueError(f"samples disagree on shape: {shapes}")
    m = len(samples)
    if labels is None:
        labels = [f"sample_{i}" for i in range(m)]
    if len(labels) != m:
        raise ValueError("labels length mismatch")
    dim = samples[0].size
    if k > min(m - 1, dim):
        raise ValueError(f"k={k} exceeds the rank bound min({m - 1}, {dim})")

    x = np.stack([np.asarray(s, dtype=np.float64).ravel() for s in samples])
    x -= x.mean(axis=0, keepdims=True)
    gram = x @ x.T / (m - 1)
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]

    rank = int(np.sum(evals > max(evals[0], 0.0) * 1e-12)) if evals.size else 0
    k_eff = min(k, rank)
    if k_eff < k:
        warnings.warn(f"covariance rank {rank} < requested k={k}; truncating", stacklevel=2)

    coords = np.zeros((m, k))
    for comp in range(k_eff):
        v = x.T @ evecs[:, comp]
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        v /= norm
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        coords[:, comp] = x @ v
    return [EmbeddingPoint(lbl, coords[i]) for i, lbl in enumerate(labels)]


def silhouette_two_groups(points: list[EmbeddingPoint], group_of) -> float:
    """Mean silhouette score for a two-way split of embedding points.

    group_of maps a label to a group key; points mapping to None are
    excluded. Positive means the groups separate in embedding space.
    """
    groups: dict[str, list[np.ndarray]] = {}
    members = []
    for p in points:
        g = group_of(p.label)
        if g is not None:
            groups.setdefault(g, []).append(p.coords)
            members.append((g, p.coords))
    if len(groups) != 2:
        raise ValueError(f"expected exactly 2 groups, got {sorted(groups)}")
    scores = []
    for g, c in members:
        own = [q for q in groups[g] if q is not c]
        other_key = next(k for k in groups if k != g)
        other = groups[other_key]
        if not own:
            continue
        a = float(np.mean([np.linalg.norm(c - q) for q in own]))
        b = float(np.mean([np.linalg.norm(c - q) for q in other]))
        denom = max(a, b)
        if denom > 0:
            scores.append((b - a) / denom)
    return float(np.mean(scores)) if scores else 0.0


def residual_autocorr(
    noisy: np.ndarray, clean: np.ndarray, max_lag: int
) -> list[tuple[int, int, float]]:
    """Normalized autocorrelation of the mean-removed residual, via the
    inverse transform of the power spectrum. Emits the central cross
    profiles: rows (dr, 0, corr) and (0, dc, corr) for |lag| <= max_lag."""
    noisy = np.asarray(noisy, dtype=np.float64)
    clean = np.asarray(clean, dtype=np.float64)
    if noisy.shape != clean.shape:
        raise ValueError("shape mismatch")
    h, w = noisy.shape
    if max_lag >= min(h, w) // 2:
        raise ValueError("max_lag too large for the grid")
    resid = noisy - clean
    resid = resid - resid.mean()
    denom = float(np.sum(resid**2))
    if denom == 0.0:
        raise ValueError("zero-variance residual")
    corr = np.fft.ifft2(np.abs(np.fft.fft2(resid)) ** 2).real / denom
    rows = []
    for dr in range(-max_lag, max_lag + 1):
        rows.append((dr, 0, float(corr[dr % h, 0])))
    for dc in range(-max_lag, max_lag + 1):
        if dc != 0:
            rows.append((0, dc, float(corr[0, dc % w])))
    return rows


def mean_abs_offcenter(rows: list[tuple[int, int, float]]) -> float:
    """Mean |correlation| over the non-zero lags of an autocorr table."""
    vals = [abs(c) for dr, dc, c in rows if (dr, dc) != (0, 0)]
    return float(np.mean(vals)) if vals else 0.0


def write_autocorr_csv(path, rows) -> None:
    write_csv(path, ["lag_row", "lag_col", "corr"], rows)


def write_embedding_csv(path, points: list[EmbeddingPoint]) -> None:
    k = len(points[0].coords) if points else 0
    header = ["label"] + [f"pc{i + 1}" for i in range(k)]
    write_csv(path, header, [[p.label, *p.coords] for p in points])


def truncation_ablation(base_config, seeds, run_fn) -> list[dict]:
    """Run the pipeline with and without pseudo-sample truncation on the
    same seeds and tabulate metrics.

    run_fn(config) -> manifest dict; base_config must expose
    `with_overrides(seed=..., use_clamp=...)` plus `config_hash_without_clamp()`
    so the rows can be audited as identical up to the clamp flag.
    """
    rows = []
    for use_clamp in (False, True):
        for seed in seeds:
            cfg = base_config.with_overrides(seed=seed, use_clamp=use_clamp)
            manifest = run_fn(cfg)
            rows.append(
                {
                    "objective": "clamped" if use_clamp else "full_range",
                    "seed": seed,
                    "config_hash_without_clamp": cfg.config_hash_without_clamp(),
                    **{k: manifest["metrics"][k] for k in ("psnr_denoised", "ssim_denoised", "rmse_denoised", "psnr_noisy")},
                }
            )
    return rows


def hyperparam_sweep(base_config, param: str, values, seeds, run_fn) -> list[dict]:
    """One pipeline run per (value, seed); param is one of
    n | r_range | beta | z_delta."""
    if param not in ("n", "r_range", "beta", "z_delta"):
        raise ValueError(f"unknown sweep parameter {param!r}")
    if not values:
        raise ValueError("values must be non-empty")
    rows = []
    for value in values:
        for seed in seeds:
            if param == "r_range":
                r1, r2 = value
                cfg = base_config.with_overrides(seed=seed, r1=r1, r2=r2)
                shown = f"({r1},{r2})"
            else:
                cfg = base_config.with_overrides(seed=seed, **{param: value})
                shown = str(value)
            manifest = run_fn(cfg)
            rows.append(
                {
                    "param": param,
                    "value": shown,
                    "seed": seed,
                    **{k: manifest["metrics"][k] for k in ("psnr_denoised", "ssim_denoised", "rmse_denoised", "psnr_noisy")},
                }
            )
    return rows
