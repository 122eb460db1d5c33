from .fourier import dft_matrix, fft, fft2, fftshift, ifft, ifft2, ifftshift
from .linear import (
    FourierMaskOperator,
    GaussianOperator,
    LinearOperator,
    MatrixOperator,
    NoiseModel,
    measure,
    sample_noise,
)
from .masks import MASK_KINDS, make_mask, read_pgm, write_pgm

__all__ = [
    "FourierMaskOperator",
    "GaussianOperator",
    "LinearOperator",
    "MASK_KINDS",
    "MatrixOperator",
    "NoiseModel",
    "dft_matrix",
    "fft",
    "fft2",
    "fftshift",
    "ifft",
    "ifft2",
    "ifftshift",
    "make_mask",
    "measure",
    "read_pgm",
    "sample_noise",
    "write_pgm",
]
