"""Full-reference (PSNR / SSIM / RMSE) and reference-free (SNR / CNR / NPS)
image-quality metrics.

Full-reference metrics optionally clip both images to a display window
before comparison (the clinical convention evaluates inside a fixed HU
interval); in phantom mode data_range defaults to max - min of the
reference. SNR/CNR use population statistics over rectangular regions of
interest. The noise power spectrum is the ROI-averaged squared DFT of
mean-removed residuals, radially averaged into one-sample-wide bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .grid import write_csv


@dataclass(frozen=True)
class MetricConfig:
    data_range: float | None = None  # None: use max - min of the reference
    window_lo: float | None = None
    window_hi: float | None = None
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03

    def __post_init__(self):
        if self.data_range is not None and self.data_range <= 0:
            raise ValueError("data_range must be > 0")
        if (self.window_lo is None) != (self.window_hi is None):
            raise ValueError("window_lo and window_hi must be set together")
        if self.window_lo is not None and not self.window_hi > self.window_lo:
            raise ValueError("window_hi must exceed window_lo")

    @property
    def windowed(self) -> bool:
        return self.window_lo is not None


# Clinical display interval; pair with data_range 4096 when comparing in HU.
HU_WINDOW = (-1024.0, 3072.0)


@dataclass(frozen=True)
class Roi:
    """Rectangle (row0, col0, rows, cols)."""

    row0: int
    col0: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.row0 < 0 or self.col0 < 0:
            raise ValueError("ROI must be non-empty and non-negative")

    def extract(self, image: np.ndarray) -> np.ndarray:
        if self.row0 + self.rows > image.shape[0] or self.col0 + self.cols > image.shape[1]:
            raise ValueError(f"ROI {self} exceeds image bounds {image.shape}")
        return image[self.row0 : self.row0 + self.rows, self.col0 : self.col0 + self.cols]

    def overlaps(self, other: "Roi") -> bool:
        return not (
            self.row0 + self.rows <= other.row0
            or other.row0 + other.rows <= self.row0
            or self.col0 + self.cols <= other.col0
            or other.col0 + other.cols <= self.col0
        )


def _prepare(ref: np.ndarray, test: np.ndarray, cfg: MetricConfig):
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    if cfg.windowed:
        ref = np.clip(ref, cfg.window_lo, cfg.window_hi)
        test = np.clip(test, cfg.window_lo, cfg.window_hi)
    if cfg.data_range is not None:
        rng = cfg.data_range
    elif cfg.windowed:
        rng = cfg.window_hi - cfg.window_lo
    else:
        rng = float(ref.max() - ref.min())
    if rng <= 0:
        raise ValueError("degenerate data range (constant reference)")
    return ref, test, rng


def rmse(ref: np.ndarray, test: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    ref, test, _ = _prepare(ref, test, cfg)
    return float(np.sqrt(np.mean((ref - test) ** 2)))


def psnr(ref: np.ndarray, test: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    """20*log10(data_range / rmse); +inf for identical images."""
    ref, test, rng = _prepare(ref, test, cfg)
    err = float(np.sqrt(np.mean((ref - test) ** 2)))
    if err == 0.0:
        return math.inf
    return 20.0 * math.log10(rng / err)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def ssim(ref: np.ndarray, test: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    """Mean local SSIM, Gaussian window, valid-region averaging."""
    ref, test, rng = _prepare(ref, test, cfg)
    if min(ref.shape) < cfg.ssim_window:
        raise ValueError(f"image smaller than the {cfg.ssim_window}-pixel SSIM window")
    k = _gaussian_kernel(cfg.ssim_window, cfg.ssim_sigma)
    c1 = (cfg.ssim_k1 * rng) ** 2
    c2 = (cfg.ssim_k2 * rng) ** 2
    mu1 = fftconvolve(ref, k, mode="valid")
    mu2 = fftconvolve(test, k, mode="valid")
    var1 = fftconvolve(ref * ref, k, mode="valid") - mu1**2
    var2 = fftconvolve(test * test, k, mode="valid") - mu2**2
    cov = fftconvolve(ref * test, k, mode="valid") - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * cov + c2)
    den = (mu1**2 + mu2**2 + c1) * (var1 + var2 + c2)
    return float(np.mean(num / den))


def snr_cnr(image: np.ndarray, roi: Roi, background: Roi) -> tuple[float, float]:
    """(mean(roi) / std(bg), |mean(roi) - mean(bg)| / std(bg)), population std."""
    image = np.asarray(image, dtype=np.float64)
    if roi.overlaps(background):
        raise ValueError("signal and background ROIs overlap")
    sig = roi.extract(image)
    bg = background.extract(image)
    bg_std = float(np.std(bg))
    if bg_std == 0.0:
        raise ValueError("background ROI has zero standard deviation")
    snr = float(np.mean(sig)) / bg_std
    cnr = abs(float(np.mean(sig)) - float(np.mean(bg))) / bg_std
    return snr, cnr


def nps2d(rois: list[np.ndarray], pixel_size: float) -> np.ndarray:
    """ROI-averaged 2D noise power spectrum of mean-removed residuals:
    |DFT|^2 * pixel_size^2 / (rows * cols), DC at (0, 0)."""
    if not rois:
        raise ValueError("need at least one ROI")
    shapes = {r.shape for r in rois}
    if len(shapes) > 1:
        raise ValueError(f"ROIs disagree on shape: {shapes}")
    rows, cols = rois[0].shape
    acc = np.zeros((rows, cols), dtype=np.float64)
    for r in rois:
        r = np.asarray(r, dtype=np.float64)
        resid = r - r.mean()
        acc += np.abs(np.fft.fft2(resid)) ** 2 * (pixel_size**2 / (rows * cols))
    return acc / len(rois)


def nps(rois: list[np.ndarray], pixel_size: float) -> list[tuple[float, float]]:
    """Radially averaged NPS: rows of (spatial frequency, power).

    Bins are one frequency sample wide, 1 / (min(rows, cols) * pixel_size).
    """
    spec = nps2d(rois, pixel_size)
    rows, cols = spec.shape
    fu = np.fft.fftfreq(rows, d=pixel_size)
    fv = np.fft.fftfreq(cols, d=pixel_size)
    rho = np.sqrt(fu[:, None] ** 2 + fv[None, :] ** 2)
    df = 1.0 / (min(rows, cols) * pixel_size)
    idx = np.floor(rho / df + 0.5).astype(np.int64)
    out = []
    for b in range(int(idx.max()) + 1):
        sel = idx == b
        if np.any(sel):
            out.append((b * df, float(spec[sel].mean())))
    return out


def write_metrics_csv(path, values: dict) -> None:
    write_csv(path, ["name", "value"], sorted(values.items()))


def write_nps_csv(path, rows) -> None:
    write_csv(path, ["freq", "nps"], rows)
