"""Frequency-domain pseudo-sample generation.

Both operators transform a noisy sinogram into a surrogate training sample
by perturbing only the high-frequency amplitude spectrum: phase is kept
everywhere (anatomy and edges live there) and amplitude inside a
low-frequency anchor radius is kept bit-for-bit (macroscopic contrast).

  - noise perturbation: a mean-one centrosymmetric multiplicative field
    on bins outside a per-sample random anchor radius drawn from
    Uniform(r1, r2);
  - mask perturbation: a Bernoulli(beta) centrosymmetric retention mask
    on bins outside the fixed anchor radius r1.

Banks of n samples from each operator form the self-supervised training
set; clamping them to [0, t] removes the high-variance outliers that
destabilize training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream
from .spectrum import (
    centrosymmetric_bernoulli,
    centrosymmetric_uniform,
    forward_dft,
    inverse_dft,
    radial_field,
)

SQRT2 = float(np.sqrt(2.0))


@dataclass(frozen=True)
class PerturbConfig:
    """Hyperparameters of the two perturbation operators."""

    r1: float = 0.5
    r2: float = 0.6
    beta: float = 0.5
    z_delta: float = 0.8
    n: int = 4
    clamp_t: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.r1 <= self.r2 <= SQRT2 + 1e-12:
            raise ValueError(f"need 0 < r1 <= r2 <= sqrt(2), got ({self.r1}, {self.r2})")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not 0.0 < self.z_delta <= 1.0:
            raise ValueError(f"z_delta must be in (0, 1], got {self.z_delta}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.clamp_t <= 0:
            raise ValueError("clamp_t must be > 0")


@dataclass
class SampleBank:
    """Ordered pseudo-samples from one perturbation operator."""

    kind: str  # "noise" | "mask"
    samples: list[np.ndarray]
    source_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("noise", "mask"):
            raise ValueError(f"unknown bank kind {self.kind!r}")
        shapes = {s.shape for s in self.samples}
        if len(shapes) > 1:
            raise ValueError(f"bank samples disagree on shape: {shapes}")
        for s in self.samples:
            if not np.all(np.isfinite(s)):
                raise ValueError("bank sample contains non-finite values")

    def __len__(self) -> int:
        return len(self.samples)


def ppnp(sino: np.ndarray, cfg: PerturbConfig, rng: RngStream) -> np.ndarray:
    """Noise-perturbed pseudo-sample.

    Draws the anchor radius Uniform(r1, r2) (one draw per call), then
    multiplies amplitudes outside it by a fresh mean-one centrosymmetric
    field. Phase untouched; returns the real inverse transform.
    """
    sino = np.asarray(sino, dtype=np.float64)
    h, w = sino.shape
    r_rand = rng.uniform(cfg.r1, cfg.r2)
    z = centrosymmetric_uniform(h, w, cfg.z_delta, rng)
    rho = radial_field(h, w)
    perturbed = rho > r_rand
    if not perturbed.any():  # empty band: identity, skip the transform roundoff
        return sino.copy()
    spec = forward_dft(sino)
    spec.amp = np.where(perturbed, spec.amp * z, spec.amp)
    out, _residual = inverse_dft(spec)
    return out


def ppmp(sino: np.ndarray, cfg: PerturbConfig, rng: RngStream) -> np.ndarray:
    """Mask-perturbed pseudo-sample.

    Fixed anchor radius r1 (no redraw); amplitudes outside it are passed
    through a fresh Bernoulli(beta) centrosymmetric retention mask. Phase
    untouched; returns the real inverse transform.
    """
    sino = np.asarray(sino, dtype=np.float64)
    h, w = sino.shape
    b = centrosymmetric_bernoulli(h, w, cfg.beta, rng)
    rho = radial_field(h, w)
    perturbed = rho > cfg.r1
    if not perturbed.any():
        return sino.copy()
    spec = forward_dft(sino)
    spec.amp = np.where(perturbed, spec.amp * b, spec.amp)
    out, _residual = inverse_dft(spec)
    return out


def build_banks(
    sino: np.ndarray, cfg: PerturbConfig, rng: RngStream
) -> tuple[SampleBank, SampleBank]:
    """n noise-perturbed then n mask-perturbed samples off one stream.

    Draw order is fixed (all noise samples in index order, then all mask
    samples), so a (sinogram, config, seed) triple pins both banks.
    """
    meta = {
        "r1": cfg.r1,
        "r2": cfg.r2,
        "beta": cfg.beta,
        "z_delta": cfg.z_delta,
        "n": cfg.n,
        "seed": int(rng.seed),
        "counter0": rng.counter,
    }
    noise_bank = SampleBank(
        "noise", [ppnp(sino, cfg, rng) for _ in range(cfg.n)], dict(meta)
    )
    mask_bank = SampleBank(
        "mask", [ppmp(sino, cfg, rng) for _ in range(cfg.n)], dict(meta)
    )
    return noise_bank, mask_bank


def clamp_bank(bank: SampleBank, t: float) -> SampleBank:
    """Values bounded to [0, t]."""
    if t <= 0:
        raise ValueError("clamp ceiling must be > 0")
    clamped = [np.clip(s, 0.0, t) for s in bank.samples]
    meta = dict(bank.source_meta)
    meta["clamp_t"] = t
    return SampleBank(bank.kind, clamped, meta)
