"""Synthetic phantom, parallel-beam forward projection, and filtered back
projection.

Geometry convention shared by radon and fbp: pixel (row, col) sits at
math coordinates x = col - c, y = row - c with c = (size - 1) / 2; the ray
at angle theta and detector offset t is (x, y) = t*(cos, sin) + s*(-sin, cos),
so a point projects to t = x*cos(theta) + y*sin(theta). Angles are uniform
over [0, pi).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# Modified Shepp-Logan ellipses: (value, semi_x, semi_y, x0, y0, angle_deg)
# on the unit square; additive, range [0, 1], skull ring at 1.0.
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.605, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

RAY_STEP = 0.5  # pixels; integration step for the forward projector


@dataclass(frozen=True)
class ScanGeometry:
    """Parallel-beam scan description."""

    n_angles: int
    n_detectors: int
    detector_spacing: float = 1.0
    image_size: int = 128

    def __post_init__(self):
        if self.n_angles < 1 or self.n_detectors < 1:
            raise ConfigError("n_angles and n_detectors must be positive")
        if self.detector_spacing <= 0:
            raise ConfigError("detector_spacing must be > 0")
        span = self.n_detectors * self.detector_spacing
        if span < self.image_size:
            raise ConfigError(
                f"detector span {span:.1f} px does not cover the {self.image_size} px image"
            )
        if span < self.image_size * np.sqrt(2.0):
            warnings.warn(
                f"detector span {span:.1f} px is short of the image diagonal "
                f"{self.image_size * np.sqrt(2.0):.1f} px; corners will be cropped",
                stacklevel=2,
            )

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * np.pi / self.n_angles

    @property
    def detector_offsets(self) -> np.ndarray:
        return (np.arange(self.n_detectors) - (self.n_detectors - 1) / 2.0) * self.detector_spacing


def shepp_logan(size: int) -> np.ndarray:
    """Modified Shepp-Logan phantom sampled at pixel centers, values in [0, 1]."""
    if size < 16:
        raise ConfigError(f"phantom size {size} too small (minimum 16)")
    c = (size - 1) / 2.0
    xs = (np.arange(size) - c) / c
    ys = (c - np.arange(size)) / c  # y up so the tilted ellipses match convention
    x = xs[None, :]
    y = ys[:, None]
    img = np.zeros((size, size), dtype=np.float64)
    for value, a, b, x0, y0, phi_deg in SHEPP_LOGAN_ELLIPSES:
        phi = np.deg2rad(phi_deg)
        dx = x - x0
        dy = y - y0
        xr = dx * np.cos(phi) + dy * np.sin(phi)
        yr = -dx * np.sin(phi) + dy * np.cos(phi)
        img += np.where((xr / a) ** 2 + (yr / b) ** 2 <= 1.0, value, 0.0)
    # exact region values are >= 0; clear the fp residue of cancelling ellipses
    return np.maximum(img, 0.0)


def _bilinear_zero(img: np.ndarray, row: np.ndarray, col: np.ndarray) -> np.ndarray:
    """Bilinear sample with zero outside the grid."""
    h, w = img.shape
    r0 = np.floor(row).astype(np.int64)
    c0 = np.floor(col).astype(np.int64)
    fr = row - r0
    fc = col - c0
    out = np.zeros(row.shape, dtype=np.float64)
    for dr, dc, wgt in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr = r0 + dr
        cc = c0 + dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        vals = img[np.clip(rr, 0, h - 1), np.clip(cc, 0, w - 1)]
        out += np.where(ok, vals * wgt, 0.0)
    return out


def radon(image: np.ndarray, geom: ScanGeometry) -> np.ndarray:
    """Forward projection: line integrals by midpoint rule with bilinear
    sampling at RAY_STEP-pixel spacing. Output shape (n_angles, n_detectors),
    units pixel-length * attenuation."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ConfigError(f"radon expects a square image, got {image.shape}")
    size = image.shape[0]
    c = (size - 1) / 2.0
    length = size * np.sqrt(2.0)
    n_steps = int(np.ceil(length / RAY_STEP))
    s = (np.arange(n_steps) + 0.5) * RAY_STEP - length / 2.0
    t = geom.detector_offsets
    sino = np.empty((geom.n_angles, geom.n_detectors), dtype=np.float64)
    for i, theta in enumerate(geom.angles):
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        x = t[:, None] * cos_t - s[None, :] * sin_t
        y = t[:, None] * sin_t + s[None, :] * cos_t
        samples = _bilinear_zero(image, y + c, x + c)
        sino[i] = samples.sum(axis=1) * RAY_STEP
    return sino


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def ramp_filter(n_pad: int, spacing: float, hann: bool = False) -> np.ndarray:
    """|f| response on the padded FFT grid, optionally Hann-apodized."""
    freqs = np.fft.fftfreq(n_pad, d=spacing)
    filt = np.abs(freqs)
    if hann:
        nyquist = 1.0 / (2.0 * spacing)
        filt = filt * 0.5 * (1.0 + np.cos(np.pi * freqs / nyquist))
    return filt


def fbp(sino: np.ndarray, geom: ScanGeometry, hann: bool = False) -> np.ndarray:
    """Ram-Lak filtered back projection onto an image_size^2 grid.

    Projections are zero-padded to the next power of two >= 2 * n_detectors,
    filtered in frequency space, then backprojected with linear detector
    interpolation and scaled by pi / n_angles.
    """
    sino = np.asarray(sino, dtype=np.float64)
    if sino.shape != (geom.n_angles, geom.n_detectors):
        raise ConfigError(
            f"sinogram shape {sino.shape} does not match geometry "
            f"({geom.n_angles}, {geom.n_detectors})"
        )
    n_pad = _next_pow2(2 * geom.n_detectors)
    filt = ramp_filter(n_pad, geom.detector_spacing, hann=hann)
    padded = np.zeros((geom.n_angles, n_pad), dtype=np.float64)
    padded[:, : geom.n_detectors] = sino
    filtered = np.fft.ifft(np.fft.fft(padded, axis=1) * filt[None, :], axis=1).real
    filtered = filtered[:, : geom.n_detectors]

    size = geom.image_size
    c = (size - 1) / 2.0
    x = np.arange(size) - c
    y = np.arange(size) - c
    xg = x[None, :]
    yg = y[:, None]
    t0 = (geom.n_detectors - 1) / 2.0
    recon = np.zeros((size, size), dtype=np.float64)
    for i, theta in enumerate(geom.angles):
        t = xg * np.cos(theta) + yg * np.sin(theta)
        pos = t / geom.detector_spacing + t0
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        ok0 = (i0 >= 0) & (i0 < geom.n_detectors)
        ok1 = (i0 + 1 >= 0) & (i0 + 1 < geom.n_detectors)
        row = filtered[i]
        v0 = np.where(ok0, row[np.clip(i0, 0, geom.n_detectors - 1)], 0.0)
        v1 = np.where(ok1, row[np.clip(i0 + 1, 0, geom.n_detectors - 1)], 0.0)
        recon += v0 * (1.0 - frac) + v1 * frac
    return recon * (np.pi / geom.n_angles)
