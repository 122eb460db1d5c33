"""Training objectives: reconstruction loss plus Jacobian or weight penalties."""
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import tensor as T
from .autodiff.tensor import Tensor
from .jacnorm import frob_sq, spectral_norms

FAMILIES = ("none", "SJA_SJ", "FJA_FJ", "SJA", "FJA", "WD", "WS", "FJ")
SPECTRAL_FAMILIES = ("SJA_SJ", "SJA")
FROBENIUS_FAMILIES = ("FJA_FJ", "FJA")
BASELINE_FAMILIES = ("WD", "WS", "FJ")


@dataclass
class RegularizerSpec:
    """Which penalty to add and how strongly.

    ``lambda1`` weights the operator-aware term (||JA||) and ``lambda2`` the
    plain Jacobian term (||J||). Baseline families (WD, WS, FJ) use
    ``lambda1`` as their single weight. With ``adaptive=True`` both weights
    are recomputed each regularised step by :func:`adaptive_lambda`.
    """

    family: str = "none"
    lambda1: float = 0.0
    lambda2: float = 0.0
    adaptive: bool = False
    adaptive_scale: float = 20.0
    step_fraction: float = 1.0
    power_iters: int = 3
    n_proj: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown regulariser family {self.family!r}; choose from {FAMILIES}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularisation weights must be non-negative")
        if not 0 < self.step_fraction <= 1:
            raise ValueError("step_fraction must lie in (0, 1]")
        if self.adaptive_scale <= 0:
            raise ValueError("adaptive_scale must be positive")
        if self.power_iters < 1 or self.n_proj < 1:
            raise ValueError("power_iters and n_proj must be >= 1")
        if self.family in ("SJA", "FJA"):
            self.lambda2 = 0.0

    @property
    def needs_operator(self):
        return self.family in SPECTRAL_FAMILIES + FROBENIUS_FAMILIES

    @property
    def uses_lambda2(self):
        return self.family in ("SJA_SJ", "FJA_FJ")


@dataclass
class ObjectiveValue:
    total: Tensor
    loss: float
    reg1: float | None = None
    reg2: float | None = None
    lambda1: float = 0.0
    lambda2: float = 0.0


def recon_loss(net, X, Y):
    """Batch mean of ||f(y) - x||_2 (on the tape)."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty batch")
    pred = net(np.atleast_2d(Y))
    res = T.sub(pred, np.atleast_2d(X))
    return T.mul(T.sum(T.norm(res, axis=1)), 1.0 / len(np.atleast_2d(X)))


def adaptive_lambda(l, r, s=20.0):
    """``max(0, floor(log10(l / r))) / s``: weight from the loss/penalty magnitude gap."""
    if l <= 0 or r <= 0 or s <= 0:
        raise ValueError("adaptive_lambda needs positive l, r and s")
    alpha = math.floor(math.log10(l / r))
    return max(0, alpha) / s


def _weights(spec, loss_value, reg1, reg2):
    if not spec.adaptive:
        return spec.lambda1, spec.lambda2
    lam1 = adaptive_lambda(loss_value, reg1, spec.adaptive_scale) if reg1 else 0.0
    lam2 = 0.0
    if spec.uses_lambda2 and reg2:
        lam2 = adaptive_lambda(loss_value, reg2, spec.adaptive_scale)
    return lam1, lam2


def _combine(loss, spec, term1, term2):
    l = loss.item()
    r1 = term1.item() if term1 is not None else None
    r2 = term2.item() if term2 is not None else None
    lam1, lam2 = _weights(spec, l, r1, r2)
    total = loss
    if term1 is not None and lam1 > 0:
        total = T.add(total, T.mul(term1, lam1))
    if term2 is not None and lam2 > 0:
        total = T.add(total, T.mul(term2, lam2))
    return ObjectiveValue(total, l, r1, r2, lam1, lam2)


def _wants(spec, which):
    if spec.adaptive:
        return which == 1 or spec.uses_lambda2
    return (spec.lambda1 if which == 1 else spec.lambda2) > 0


def _batch_max(est):
    k = int(np.argmax(est.data))
    return T.take(est, k)


def spectral_objective(net, X, Y, A, spec, rng=None):
    """Loss + lambda1 max_B ||J A||_2 + lambda2 max_B ||J||_2."""
    if spec.family not in SPECTRAL_FAMILIES:
        raise ValueError(f"spectral objective does not handle family {spec.family!r}")
    if A is None:
        raise ValueError("spectral objective needs the forward operator")
    rng = np.random.default_rng(rng)
    loss = recon_loss(net, X, Y)
    t1 = t2 = None
    if _wants(spec, 1):
        t1 = _batch_max(spectral_norms(net, Y, A, spec.power_iters, rng, differentiable=True))
    if _wants(spec, 2):
        t2 = _batch_max(spectral_norms(net, Y, None, spec.power_iters, rng, differentiable=True))
    return _combine(loss, spec, t1, t2)


def frobenius_objective(net, X, Y, A, spec, rng=None):
    """Loss + lambda1 ||J A||_F^2 + lambda2 ||J||_F^2 (projection estimates, batch-averaged)."""
    if spec.family not in FROBENIUS_FAMILIES:
        raise ValueError(f"Frobenius objective does not handle family {spec.family!r}")
    if A is None:
        raise ValueError("Frobenius objective needs the forward operator")
    rng = np.random.default_rng(rng)
    loss = recon_loss(net, X, Y)
    t1 = t2 = None
    if _wants(spec, 1):
        t1 = frob_sq(net, Y, A, spec.n_proj, rng, differentiable=True)
    if _wants(spec, 2):
        t2 = frob_sq(net, Y, None, spec.n_proj, rng, differentiable=True)
    return _combine(loss, spec, t1, t2)


def _weight_spectral(W, n_iters, rng):
    v = rng.standard_normal(W.shape[1])
    v /= np.linalg.norm(v)
    Wd = W.data
    for _ in range(n_iters - 1):
        w = Wd.T @ (Wd @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
    vt = Tensor(v[:, None])
    u = T.matmul(W, vt)
    w = T.matmul(T.transpose(W), u)
    return T._safe_div(T.norm(T.reshape(w, (-1,)), axis=0), T.norm(T.reshape(u, (-1,)), axis=0))


def baseline_regularizer(net, Y, spec, rng=None):
    """WD: sum ||W_i||_F^2; WS: sum sigma_max(W_i); FJ: projection ||J||_F^2."""
    rng = np.random.default_rng(rng)
    if spec.family == "WD":
        terms = [T.sum(T.mul(l.weight, l.weight)) for l in net.layers]
    elif spec.family == "WS":
        terms = [_weight_spectral(l.weight, spec.power_iters, rng) for l in net.layers]
    elif spec.family == "FJ":
        return frob_sq(net, Y, None, spec.n_proj, rng, differentiable=True)
    else:
        raise ValueError(f"{spec.family!r} is not a baseline regulariser")
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return total


def objective(net, X, Y, A, spec, rng=None):
    """Dispatch on ``spec.family``; ``none`` gives the bare reconstruction loss."""
    if spec.family in SPECTRAL_FAMILIES:
        return spectral_objective(net, X, Y, A, spec, rng)
    if spec.family in FROBENIUS_FAMILIES:
        return frobenius_objective(net, X, Y, A, spec, rng)
    loss = recon_loss(net, X, Y)
    if spec.family == "none":
        return ObjectiveValue(loss, loss.item())
    term = baseline_regularizer(net, Y, spec, rng) if _wants(spec, 1) else None
    return _combine(loss, spec, term, None)
