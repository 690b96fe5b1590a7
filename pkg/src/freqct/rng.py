"""Deterministic, platform-independent random stream.

A counter-based generator: slot i of a stream holds SplitMix64's bijective
mix applied to ``seed + GAMMA * i`` in 64-bit wrapping arithmetic. The
whole state is (seed, counter), so a stream can be checkpointed, derived,
or consumed in vectorized blocks while remaining bit-reproducible across
platforms and numpy versions.

Draw budgets are fixed so stream layout never depends on drawn values:
  - uniform: 1 slot
  - normal:  2 slots (Box-Muller cosine branch)
  - poisson: 2 slots per element (CDF inversion for lam < 30 uses the
    first slot only; normal approximation with continuity correction for
    lam >= 30 uses both). The threshold and budgets are part of the
    provenance recorded in file meta by callers.

Because slot values are pure functions of the slot index, an interleaved
per-element draw order (e.g. one Poisson then one Gaussian per sinogram
bin) can be evaluated in one vectorized pass with identical results.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Poisson draws switch from CDF inversion to the normal approximation here.
POISSON_NORMAL_THRESHOLD = 30.0


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _normal_from_uniforms(u: np.ndarray) -> np.ndarray:
    """Standard normals from uniform pairs u of shape (n, 2)."""
    u1 = u[:, 0] + 2.0 ** -53  # (0, 1], keeps log finite
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u[:, 1])


def _poisson_by_inversion(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Smallest k with CDF(k) > u, vectorized over bins (lam < ~30)."""
    pmf = np.exp(-lam)
    cdf = pmf.copy()
    k = np.zeros(lam.shape, dtype=np.float64)
    pending = u >= cdf
    step = 0
    while np.any(pending):
        step += 1
        if step > 512:  # unreachable for lam < 30; guards fp pathologies
            k[pending] = step
            break
        pmf = pmf * (lam / step)
        cdf = cdf + pmf
        k[pending] = step
        pending = pending & (u >= cdf)
    return k


def _poisson_from_uniforms(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Poisson draws from uniform pairs u of shape (n, 2), fixed budget."""
    out = np.empty(lam.shape, dtype=np.float64)
    small = lam < POISSON_NORMAL_THRESHOLD
    if np.any(small):
        out[small] = _poisson_by_inversion(lam[small], u[small, 0])
    big = ~small
    if np.any(big):
        g = _normal_from_uniforms(u[big])
        out[big] = np.maximum(np.floor(lam[big] + np.sqrt(lam[big]) * g + 0.5), 0.0)
    return out


class RngStream:
    """Reproducible stream of uniforms/normals/Poisson draws.

    Same (seed, counter) always yields the same sequence regardless of how
    draws are batched.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = int(counter)

    def derive(self, tag: int) -> "RngStream":
        """Independent stream for a sub-task: seed XOR fixed tag, counter 0."""
        return RngStream(int(self.seed) ^ (tag & 0xFFFFFFFFFFFFFFFF))

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix64(self.seed + _GAMMA * idx)

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in [0, 1)."""
        return (self._raw(n) >> np.uint64(11)) * (2.0 ** -53)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return float(lo + (hi - lo) * self.uniforms(1)[0])

    def normals(self, n: int) -> np.ndarray:
        """n standard normals; consumes exactly 2n slots."""
        return _normal_from_uniforms(self.uniforms(2 * n).reshape(n, 2))

    def integers_below(self, upper: int, n: int) -> np.ndarray:
        """n integers uniform on {0, ..., upper-1}; 1 slot each."""
        return np.minimum((self.uniforms(n) * upper).astype(np.int64), upper - 1)

    def poisson(self, lam: np.ndarray) -> np.ndarray:
        """Element-wise Poisson draws, fixed 2-slot budget per element."""
        lam = np.asarray(lam, dtype=np.float64)
        u = self.uniforms(2 * lam.size).reshape(lam.size, 2)
        return _poisson_from_uniforms(lam.ravel(), u).reshape(lam.shape)

    def poisson_gaussian_pairs(self, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per element, one Poisson draw then one Gaussian draw (4 slots),
        in element order: element i owns slots [4i, 4i+4) of the block.

        Equivalent to alternating poisson(lam[i:i+1]) / normals(1) calls,
        evaluated in one vectorized pass.
        """
        lam = np.asarray(lam, dtype=np.float64)
        u = self.uniforms(4 * lam.size).reshape(lam.size, 4)
        counts = _poisson_from_uniforms(lam.ravel(), u[:, 0:2])
        gauss = _normal_from_uniforms(u[:, 2:4])
        return counts.reshape(lam.shape), gauss.reshape(lam.shape)
