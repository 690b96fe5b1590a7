"""Unitary 2D DFT split into amplitude/phase, normalized radial frequency
coordinates, and centrosymmetric random fields.

The forward transform is scaled by 1/sqrt(H*W) (and the inverse by the
same factor), so Parseval holds factor-free: sum(p**2) == sum(amp**2).
A field F is centrosymmetric when F[u, v] == F[(-u) % H, (-v) % W]; a
real grid's amplitude spectrum is centrosymmetric and its phase is
antisymmetric, and perturbing the amplitude by a non-negative
centrosymmetric field (phase untouched) keeps the inverse real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SymmetryViolationError
from .rng import RngStream


@dataclass
class Spectrum:
    """Amplitude (>= 0) and phase (radians, (-pi, pi]) of a unitary 2D DFT,
    DC at index (0, 0)."""

    amp: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        if self.amp.shape != self.phase.shape:
            raise ValueError("amp and phase shapes differ")

    @property
    def shape(self):
        return self.amp.shape


def forward_dft(grid: np.ndarray) -> Spectrum:
    """Unitary 2D DFT of a real grid, decomposed into amplitude and phase."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    spec = np.fft.fft2(grid) / np.sqrt(h * w)
    return Spectrum(amp=np.abs(spec), phase=np.angle(spec))


def inverse_dft(spec: Spectrum, tol: float = 1e-5) -> tuple[np.ndarray, float]:
    """Real part of the unitary inverse transform plus the imaginary residual.

    Raises SymmetryViolationError when the residual exceeds tol * max(amp),
    which indicates a non-centrosymmetric perturbation of the spectrum.
    """
    h, w = spec.shape
    z = spec.amp * np.exp(1j * spec.phase)
    back = np.fft.ifft2(z) * np.sqrt(h * w)
    residual = float(np.max(np.abs(back.imag))) if back.size else 0.0
    amp_max = float(np.max(spec.amp)) if spec.amp.size else 0.0
    if amp_max > 0.0 and residual > tol * amp_max:
        raise SymmetryViolationError(
            f"imaginary residual {residual:.3e} exceeds {tol:.0e} x max amplitude {amp_max:.3e}"
        )
    return np.ascontiguousarray(back.real), residual


def centered_indices(n: int) -> np.ndarray:
    """Signed frequency index per bin: 0, 1, ..., floor(n/2), -(ceil(n/2)-1), ..., -1."""
    idx = np.arange(n)
    return np.where(idx <= n // 2, idx, idx - n).astype(np.float64)


def radial_field(rows: int, cols: int) -> np.ndarray:
    """Per-bin normalized polar radius rho.

    Each axis is normalized by its own Nyquist index (rows/2, cols/2), so
    rho is 1.0 on the axis-aligned Nyquist bins and sqrt(2) at the corner.
    rho[0, 0] (DC) is 0 and the field is exactly centrosymmetric.
    """
    if rows < 2 or cols < 2:
        raise ValueError("radial field needs at least 2x2 bins")
    u = centered_indices(rows) / (rows / 2.0)
    v = centered_indices(cols) / (cols / 2.0)
    return np.sqrt(u[:, None] ** 2 + v[None, :] ** 2)


def _conjugate_partition(rows: int, cols: int):
    """Flat indices of canonical bins (lexicographically <= their mirror)
    and the mirror map. Self-conjugate bins are their own mirror."""
    u = np.arange(rows)[:, None]
    v = np.arange(cols)[None, :]
    flat = (u * cols + v).ravel()
    mirror = (((rows - u) % rows) * cols + ((cols - v) % cols)).ravel()
    canonical = flat <= mirror
    return flat[canonical], mirror[canonical]


def _mirrored_field(rows: int, cols: int, draw) -> np.ndarray:
    """Build a centrosymmetric field by drawing once per canonical bin
    (row-major order) and mirroring."""
    canon, mirror = _conjugate_partition(rows, cols)
    field = np.empty(rows * cols, dtype=np.float64)
    field[canon] = draw(canon.size)
    field[mirror] = field[canon]
    return field.reshape(rows, cols)


def centrosymmetric_uniform(rows: int, cols: int, delta: float, rng: RngStream) -> np.ndarray:
    """Mean-one multiplicative perturbation field, Uniform(1-delta, 1+delta)
    per canonical bin and mirrored. All entries >= 0 for delta <= 1."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must be in (0, 1], got {delta}")
    return _mirrored_field(rows, cols, lambda n: 1.0 - delta + 2.0 * delta * rng.uniforms(n))


def centrosymmetric_bernoulli(rows: int, cols: int, beta: float, rng: RngStream) -> np.ndarray:
    """Binary retention mask, Bernoulli(beta) per canonical bin and mirrored."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    return _mirrored_field(rows, cols, lambda n: (rng.uniforms(n) < beta).astype(np.float64))
