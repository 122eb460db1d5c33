"""Matrix-free estimates of ||J||_2, ||JA||_2, ||J||_F^2 and ||JA||_F^2.

Spectral norms come from power iteration driven by jvp/vjp pairs; squared
Frobenius norms from random projections onto the unit sphere. Everything is
vectorised over a batch of inputs, one Jacobian per row.

The spectral estimate after ``n`` iterations is ``||M^T u|| / ||u||`` with
``u = M v`` and ``v`` the unit-normalised previous right iterate, which is the
Rayleigh quotient of ``M M^T`` at the current left iterate: it never exceeds
``sigma_max`` and does not decrease with ``n``.
"""
from dataclasses import dataclass

import numpy as np

from .autodiff import tensor as T
from .autodiff.network import explicit_jacobian, jvp_tensor, vjp_tensor
from .autodiff.tensor import Tensor

MAX_RESTARTS = 3
PROJ_CHUNK_ROWS = 8192


@dataclass
class PowerConfig:
    n_iters: int = 3
    seed: int | None = 0

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")


@dataclass
class ProjConfig:
    n_proj: int = 1
    seed: int | None = 0

    def __post_init__(self):
        if self.n_proj < 1:
            raise ValueError("n_proj must be >= 1")


def _as_batch(net, Y):
    Y = np.asarray(Y.data if isinstance(Y, Tensor) else Y, dtype=np.float64)
    single = Y.ndim == 1
    if single:
        Y = Y[None, :]
    if Y.ndim != 2 or Y.shape[1] != net.input_dim:
        raise ValueError(f"inputs must have width {net.input_dim}, got shape {Y.shape}")
    if len(Y) == 0:
        raise ValueError("empty batch")
    return Y, single


def _check_operator(net, A):
    if A is not None and A.out_dim != net.input_dim:
        raise ValueError(
            f"operator output width {A.out_dim} does not match network input {net.input_dim}"
        )


def _composite(net, Y, A):
    """Row-wise products with M = J(y) (A) and its transpose, as tape functions."""

    def matvec(V):
        W = V if A is None else A(V)
        return jvp_tensor(net, Y, W)

    def rmatvec(U, create_graph=False):
        G = vjp_tensor(net, Y, U, create_graph=create_graph)
        return G if A is None else A.adjoint(G)

    return matvec, rmatvec


def _unit_rows(X):
    n = np.linalg.norm(X, axis=1, keepdims=True)
    return X / n


def _start_vectors(rng, B, dim, v0):
    if v0 is not None:
        v0 = np.asarray(v0, dtype=np.float64).reshape(B, dim)
        return _unit_rows(v0)
    return _unit_rows(rng.standard_normal((B, dim)))


def spectral_norms(net, Y, A=None, n_iters=3, rng=None, v0=None, differentiable=False, unroll=False):
    """Per-row estimates of ``sigma_max(J(y) A)`` (``A=None`` means ``J`` alone).

    With ``differentiable=True`` the result is a tape tensor of shape (B,)
    whose gradient is taken through the final iteration only (earlier
    iterates held constant). ``unroll=True`` records every iteration instead,
    for checking that approximation.
    """
    Y, _ = _as_batch(net, Y)
    _check_operator(net, A)
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    rng = np.random.default_rng(rng)
    B = len(Y)
    dim = net.input_dim if A is None else A.in_dim
    matvec, rmatvec = _composite(net, Y, A)
    V = _start_vectors(rng, B, dim, v0)

    if unroll:
        Vt = Tensor(V)
        for i in range(n_iters):
            U = matvec(Vt)
            W = rmatvec(U, create_graph=True)
            if i == n_iters - 1:
                return T.div(T.norm(W, axis=1), T.norm(U, axis=1))
            Vt = T.div(W, T.reshape(T.norm(W, axis=1), (B, 1)))

    restarts = np.zeros(B, dtype=int)
    dead = np.zeros(B, dtype=bool)
    sigma = np.zeros(B)
    i = 0
    with T.no_grad():
        while i < n_iters:
            U = matvec(Tensor(V)).data
            un = np.linalg.norm(U, axis=1)
            zero = (un == 0) & ~dead
            if zero.any():
                retry = zero & (restarts < MAX_RESTARTS)
                dead |= zero & ~retry
                if retry.any():
                    restarts[retry] += 1
                    V[retry] = _unit_rows(rng.standard_normal((int(retry.sum()), dim)))
                    continue
            W = rmatvec(Tensor(U)).data
            wn = np.linalg.norm(W, axis=1)
            if i == n_iters - 1:
                ok = un > 0
                sigma[ok] = wn[ok] / un[ok]
                break
            live = wn > 0
            V[live] = W[live] / wn[live, None]
            i += 1

    if not differentiable:
        return sigma
    # final iteration again, on the tape, from the same (constant) iterate
    U = matvec(Tensor(V))
    W = rmatvec(U, create_graph=True)
    est = T._safe_div(T.norm(W, axis=1), T.norm(U, axis=1))
    if dead.any():
        est = T.mul(est, Tensor((~dead).astype(np.float64)))
    return est


def spectral_J(net, y, cfg=None, v0=None):
    """Power-iteration estimate of ||J(y)||_2 for a single input."""
    cfg = cfg or PowerConfig()
    return float(spectral_norms(net, y, None, cfg.n_iters, cfg.seed, v0=v0)[0])


def spectral_JA(net, y, A, cfg=None, v0=None):
    """Power-iteration estimate of ||J(y) A||_2 for a single input."""
    if A is None:
        raise ValueError("spectral_JA needs an operator")
    cfg = cfg or PowerConfig()
    return float(spectral_norms(net, y, A, cfg.n_iters, cfg.seed, v0=v0)[0])


def batch_max_spectral(net, Y, A=None, cfg=None):
    """Largest per-sample spectral estimate over a batch and its index."""
    cfg = cfg or PowerConfig()
    sig = spectral_norms(net, Y, A, cfg.n_iters, cfg.seed)
    k = int(np.argmax(sig))
    return float(sig[k]), k


def frob_sq(net, Y, A=None, n_proj=1, rng=None, differentiable=False, per_sample=False):
    """Random-projection estimate of the batch-averaged ||J A||_F^2.

    Each projection draws ``z`` uniformly on the unit sphere of the output
    space and contributes ``p ||A^T J^T z||^2 / (n |B|)``; the sum is the
    batch mean of unbiased per-sample estimates. ``per_sample=True`` returns
    the per-row estimates instead (numpy only).
    """
    Y, _ = _as_batch(net, Y)
    _check_operator(net, A)
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    rng = np.random.default_rng(rng)
    B, p = len(Y), net.output_dim
    per_chunk = max(1, PROJ_CHUNK_ROWS // B)
    total = None
    rows = np.zeros(B)
    done = 0
    while done < n_proj:
        k = min(per_chunk, n_proj - done)
        Z = rng.standard_normal((k, B, p))
        Z /= np.linalg.norm(Z, axis=2, keepdims=True)
        Yk = np.broadcast_to(Y, (k, B, Y.shape[1])).reshape(k * B, -1)
        if differentiable:
            G = vjp_tensor(net, Yk, Z.reshape(k * B, p), create_graph=True)
            if A is not None:
                G = A.adjoint(G)
            part = T.mul(T.sum(T.mul(G, G)), p / (n_proj * B))
            total = part if total is None else T.add(total, part)
        else:
            with T.no_grad():
                G = vjp_tensor(net, Yk, Z.reshape(k * B, p)).data
            if A is not None:
                G = A.apply_adjoint(G)
            sq = np.sum(G * G, axis=1).reshape(k, B)
            rows += p * sq.sum(axis=0)
        done += k
    if differentiable:
        return total
    if per_sample:
        return rows / n_proj
    return float(np.sum(rows) / (n_proj * B))


def frob_sq_J(net, y, cfg=None):
    """Projection estimate of ||J(y)||_F^2 (batch mean if ``y`` is a batch)."""
    cfg = cfg or ProjConfig()
    return frob_sq(net, y, None, cfg.n_proj, cfg.seed)


def frob_sq_JA(net, y, A, cfg=None):
    """Projection estimate of ||J(y) A||_F^2 (batch mean if ``y`` is a batch)."""
    if A is None:
        raise ValueError("frob_sq_JA needs an operator")
    cfg = cfg or ProjConfig()
    return frob_sq(net, y, A, cfg.n_proj, cfg.seed)


def oracle_jacobian(net, y, A=None):
    """Explicit J(y) or J(y) A_mat, for verification."""
    J = explicit_jacobian(net, y)
    return J if A is None else J @ A.materialize()


def oracle_spectral(net, y, A=None):
    return float(np.linalg.svd(oracle_jacobian(net, y, A), compute_uv=False)[0])


def oracle_frob_sq(net, y, A=None):
    M = oracle_jacobian(net, y, A)
    return float(np.sum(M * M))
