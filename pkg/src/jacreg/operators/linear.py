"""Linear forward operators ``A`` and the bounded noise model."""
from dataclasses import dataclass

import numpy as np

from ..autodiff import tensor as T
from .fourier import fft2, fftshift, ifft2, ifftshift
from .masks import make_mask

MAX_MATERIALIZE = 10**6


class LinearOperator:
    """Real linear map R^in_dim -> R^out_dim acting on the last axis."""

    in_dim: int
    out_dim: int

    def _apply(self, x):
        raise NotImplementedError

    def _adjoint(self, u):
        raise NotImplementedError

    def _check(self, arr, width, what):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 0 or arr.shape[-1] != width:
            raise ValueError(f"{what} must have trailing width {width}, got shape {arr.shape}")
        return arr

    def apply(self, x):
        return self._apply(self._check(x, self.in_dim, "x"))

    def apply_adjoint(self, u):
        return self._adjoint(self._check(u, self.out_dim, "u"))

    def __call__(self, t):
        """Apply to a tensor, keeping the tape."""
        return T.linear_map(t, self.apply, self.apply_adjoint, name=type(self).__name__)

    def adjoint(self, t):
        """Apply the transpose to a tensor, keeping the tape."""
        return T.linear_map(t, self.apply_adjoint, self.apply, name=type(self).__name__ + "^T")

    def materialize(self):
        if self.in_dim * self.out_dim > MAX_MATERIALIZE:
            raise MemoryError(
                f"{self.out_dim}x{self.in_dim} operator exceeds the {MAX_MATERIALIZE}-entry guard"
            )
        return self.apply(np.eye(self.in_dim)).T.copy()

    def lipschitz_bound(self, method="auto", tol=1e-12, max_iter=2000, seed=0):
        """Largest singular value, by SVD when small or power iteration on A^T A."""
        if method == "auto":
            method = "svd" if self.in_dim * self.out_dim <= MAX_MATERIALIZE else "power"
        if method == "svd":
            return float(np.linalg.svd(self.materialize(), compute_uv=False)[0])
        if method != "power":
            raise ValueError(f"unknown method {method!r}")
        v = np.random.default_rng(seed).standard_normal(self.in_dim)
        v /= np.linalg.norm(v)
        sigma = 0.0
        for _ in range(max_iter):
            w = self.apply_adjoint(self.apply(v))
            nw = np.linalg.norm(w)
            if nw == 0:
                return 0.0
            new = np.sqrt(nw)
            v = w / nw
            if abs(new - sigma) <= tol * new:
                return float(new)
            sigma = new
        raise RuntimeError("power iteration for the operator norm did not converge")


class MatrixOperator(LinearOperator):
    def __init__(self, matrix):
        self.matrix = np.array(matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("operator matrix must be 2-D")
        self.out_dim, self.in_dim = self.matrix.shape

    def _apply(self, x):
        return x @ self.matrix.T

    def _adjoint(self, u):
        return u @ self.matrix

    def materialize(self):
        return self.matrix.copy()

    def __repr__(self):
        return f"{type(self).__name__}({self.out_dim}x{self.in_dim})"


class GaussianOperator(MatrixOperator):
    """Compressive q x p matrix with i.i.d. N(0, 1/q) entries."""

    def __init__(self, q, p, seed=None):
        if q < 1 or p < 1:
            raise ValueError("operator dimensions must be positive")
        self.q, self.p, self.seed = q, p, seed
        rng = np.random.default_rng(seed)
        super().__init__(rng.normal(0.0, np.sqrt(1.0 / q), size=(q, p)))


class FourierMaskOperator(LinearOperator):
    """``F^-1 M F`` on h x w images, output stacked as (real, imag) of length 2hw.

    ``mask`` is given centred (DC in the middle).
    """

    def __init__(self, mask, mask_kind=None):
        mask = np.asarray(mask)
        if mask.ndim != 2:
            raise ValueError("mask must be 2-D")
        self.mask = (mask != 0).astype(np.uint8)
        self.mask_kind = mask_kind
        self.h, self.w = mask.shape
        self.in_dim = self.h * self.w
        self.out_dim = 2 * self.in_dim
        self._kmask = ifftshift(self.mask.astype(np.float64))

    @classmethod
    def from_kind(cls, kind, h, w, s, seed=None):
        return cls(make_mask(kind, h, w, s, seed), mask_kind=kind)

    @property
    def subsample_ratio(self):
        return float(self.mask.sum()) / self.in_dim

    def _image_op(self, z):
        return ifft2(self._kmask * fft2(z))

    def _apply(self, x):
        lead = x.shape[:-1]
        z = self._image_op(x.reshape(lead + (self.h, self.w)))
        z = z.reshape(lead + (self.in_dim,))
        return np.concatenate([z.real, z.imag], axis=-1)

    def _adjoint(self, u):
        lead = u.shape[:-1]
        c = u[..., : self.in_dim] + 1j * u[..., self.in_dim :]
        z = self._image_op(c.reshape(lead + (self.h, self.w)))
        return np.ascontiguousarray(z.real.reshape(lead + (self.in_dim,)))

    def k_space(self, x):
        """Centred, masked k-space of images (for inspection)."""
        x = np.asarray(x, dtype=np.float64)
        return fftshift(self._kmask * fft2(x.reshape(x.shape[:-1] + (self.h, self.w))))

    def __repr__(self):
        return f"FourierMaskOperator({self.h}x{self.w}, s={self.subsample_ratio:.3f})"


@dataclass
class NoiseModel:
    """Perturbations with Euclidean norm exactly ``eta`` and uniform direction."""

    eta: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("noise bound eta must be non-negative")

    def sample(self, shape, rng=None):
        """Noise of ``shape``; every row along the last axis has norm ``eta``."""
        if isinstance(shape, int):
            shape = (shape,)
        shape = tuple(shape)
        if shape[-1] < 1:
            raise ValueError("noise dimension must be >= 1")
        if self.eta == 0:
            return np.zeros(shape)
        rng = np.random.default_rng(self.seed if rng is None else rng)
        n = rng.standard_normal(shape)
        nrm = np.linalg.norm(n, axis=-1, keepdims=True)
        return self.eta * n / nrm


def sample_noise(model, dim, rng=None):
    return model.sample(dim, rng)


def measure(A, X, noise=None, rng=None):
    """``y = A x + n`` row-wise."""
    Y = A.apply(X)
    if noise is not None and noise.eta > 0:
        Y = Y + noise.sample(Y.shape, rng)
    return Y
