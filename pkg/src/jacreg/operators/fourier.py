"""Unitary 1-D/2-D discrete Fourier transforms.

Power-of-two lengths use an iterative radix-2 Cooley-Tukey transform; other
lengths up to ``MAX_DIRECT`` fall back to a direct O(n^2) DFT. All transforms
act on the trailing axis (or trailing two axes) and broadcast over the rest.
"""
import numpy as np

MAX_DIRECT = 64


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


def _bit_reverse(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _radix2(x, sign):
    n = x.shape[-1]
    out = x[..., _bit_reverse(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(out.shape[:-1] + (n // size, size))
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        out = blocks.reshape(out.shape)
        size *= 2
    return out


def dft_matrix(n, inverse=False):
    """Unitary DFT matrix of order ``n``."""
    k = np.arange(n)
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def _transform(x, inverse):
    x = np.asarray(x)
    n = x.shape[-1]
    sign = 1.0 if inverse else -1.0
    if _is_pow2(n):
        return _radix2(x, sign) / np.sqrt(n)
    if n <= MAX_DIRECT:
        return x.astype(np.complex128) @ dft_matrix(n, inverse).T
    raise ValueError(f"length {n} is neither a power of two nor <= {MAX_DIRECT}")


def fft(x):
    return _transform(x, inverse=False)


def ifft(x):
    return _transform(x, inverse=True)


def fft2(x):
    """Unitary 2-D DFT over the last two axes."""
    x = np.asarray(x)
    if x.ndim < 2:
        raise ValueError("fft2 needs at least two dimensions")
    return np.swapaxes(fft(np.swapaxes(fft(x), -1, -2)), -1, -2)


def ifft2(x):
    x = np.asarray(x)
    if x.ndim < 2:
        raise ValueError("ifft2 needs at least two dimensions")
    return np.swapaxes(ifft(np.swapaxes(ifft(x), -1, -2)), -1, -2)


def fftshift(x):
    return np.roll(x, (x.shape[-2] // 2, x.shape[-1] // 2), axis=(-2, -1))


def ifftshift(x):
    return np.roll(x, (-(x.shape[-2] // 2), -(x.shape[-1] // 2)), axis=(-2, -1))
