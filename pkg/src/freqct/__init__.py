"""Zero-shot self-supervised low-dose CT denoising toolkit.

Pseudo training pairs are generated in the Fourier domain of a single
noisy sinogram (phase-preserving noise and mask perturbations of the
high-frequency amplitudes), a tiny bias-free convolutional denoiser is
trained on truncated pairs, and denoised images are reconstructed by
filtered back projection. The analysis subpackage validates the
noise-statistics theory the truncation rests on.
"""

__version__ = "0.1.0"
