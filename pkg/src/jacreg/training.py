"""Minibatch training, evaluation and checkpoints."""
import dataclasses
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import tensor as T
from .autodiff.network import forward
from .data.metrics import SSIM_WIN, psnr, ssim
from .jacnorm import spectral_norms
from .objectives import RegularizerSpec, objective, recon_loss

CKPT_MAGIC = b"JREGCKPT"
CKPT_VERSION = 1
EVAL_CHUNK = 256


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; ``record`` holds the diagnostics."""

    def __init__(self, message, record):
        super().__init__(message)
        self.record = record


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 50
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)
    eval_every: int = 1
    lipschitz_iters: int = 10
    record_wall_time: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class MetricsRecord:
    epoch: int
    train_loss: float
    test_loss: float
    ge_gap: float
    psnr: float
    ssim: float
    lambda1_used: float
    lambda2_used: float
    spectral_J_max: float
    spectral_JA_max: float
    wall_time_s: float
    reg_steps: int = 0

    def as_dict(self):
        return dataclasses.asdict(self)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """Update the arrays in ``params`` in place."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params, lr=1e-2):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def make_optimizer(cfg, arrays):
    if cfg.optimizer == "adam":
        return Adam(arrays, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return SGD(arrays, cfg.learning_rate)


def predict(net, Y):
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    return np.concatenate([forward(net, Y[i : i + EVAL_CHUNK]) for i in range(0, len(Y), EVAL_CHUNK)])


def evaluate(net, X, Y, image_shape=None):
    """Mean l2 loss, PSNR and SSIM over a split.

    SSIM is NaN when no image shape is known or the images are smaller than
    the SSIM window.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) == 0:
        raise ValueError("empty split")
    X_hat = predict(net, Y)
    loss = float(np.mean(np.linalg.norm(X_hat - X, axis=1)))
    p = float(np.mean([psnr(a, b) for a, b in zip(X_hat, X)]))
    if image_shape is None or len(image_shape) != 2 or min(image_shape) < SSIM_WIN:
        s = math.nan
    else:
        s = float(
            np.mean([ssim(a.reshape(image_shape), b.reshape(image_shape)) for a, b in zip(X_hat, X)])
        )
    return loss, p, s


def empirical_lipschitz(net, Y, A=None, n_iters=10, seed=0):
    """Sample maxima of ||J(y)||_2 and ||J(y) A||_2 over the rows of ``Y``.

    These lower-bound the suprema over the convex hull of the inputs.
    Returns ``(lip_f, lip_fa)``; ``lip_fa`` is NaN without an operator.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if len(Y) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(seed)
    lip_f = lip_fa = -np.inf
    for i in range(0, len(Y), EVAL_CHUNK):
        chunk = Y[i : i + EVAL_CHUNK]
        lip_f = max(lip_f, float(np.max(spectral_norms(net, chunk, None, n_iters, rng))))
        if A is not None:
            lip_fa = max(lip_fa, float(np.max(spectral_norms(net, chunk, A, n_iters, rng))))
    return lip_f, (lip_fa if A is not None else math.nan)


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def train(net, X_train, Y_train, A, cfg, X_test=None, Y_test=None, image_shape=None, callback=None):
    """Minimise the configured objective with minibatch Adam/SGD.

    A step is regularised when a seeded uniform draw falls below
    ``cfg.regularizer.step_fraction``; other steps minimise the bare
    reconstruction loss. Returns ``(net, records)`` with one
    :class:`MetricsRecord` per evaluation epoch.
    """
    X_train = np.atleast_2d(np.asarray(X_train, dtype=np.float64))
    Y_train = np.atleast_2d(np.asarray(Y_train, dtype=np.float64))
    if len(X_train) != len(Y_train) or len(X_train) == 0:
        raise ValueError("training inputs and targets must be non-empty and aligned")
    if Y_train.shape[1] != net.input_dim or X_train.shape[1] != net.output_dim:
        raise ValueError("data widths do not match the network")
    spec = cfg.regularizer
    if spec.needs_operator and A is None:
        raise ValueError(f"regulariser {spec.family} needs the forward operator")
    if X_test is None:
        X_test, Y_test = X_train, Y_train
    Y_all = np.concatenate([Y_train, np.atleast_2d(Y_test)])

    rng_shuffle, rng_sched, rng_est = _streams(cfg.seed)
    params = net.params
    opt = make_optimizer(cfg, [p.data for p in params])
    n = len(X_train)
    records = []
    start = time.perf_counter()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng_shuffle.permutation(n)
        lam1, lam2, n_reg = [], [], 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            Xb, Yb = X_train[idx], Y_train[idx]
            regularise = spec.family != "none" and rng_sched.random() < spec.step_fraction
            try:
                if regularise:
                    obj = objective(net, Xb, Yb, A, spec, rng_est)
                    total = obj.total
                    lam1.append(obj.lambda1)
                    lam2.append(obj.lambda2)
                    n_reg += 1
                else:
                    total = recon_loss(net, Xb, Yb)
                grads = T.grad([total], params)
            except T.NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite value at epoch {epoch}, step {step}: {exc}",
                    {"epoch": epoch, "step": step, "loss": math.nan},
                ) from exc
            if not math.isfinite(total.item()):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, step {step}",
                    {"epoch": epoch, "step": step, "loss": total.item()},
                )
            opt.step([p.data for p in params], [g.data for g in grads])
            if not all(np.all(np.isfinite(p.data)) for p in params):
                raise DivergenceError(
                    f"parameters became non-finite at epoch {epoch}, step {step}",
                    {"epoch": epoch, "step": step, "loss": total.item()},
                )
            step += 1

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            # overflow here surfaces as non-finite metrics and is reported below
            try:
                with np.errstate(all="ignore"):
                    tr_loss, _, _ = evaluate(net, X_train, Y_train)
                    te_loss, te_psnr, te_ssim = evaluate(net, X_test, Y_test, image_shape)
                if not all(math.isfinite(v) for v in (tr_loss, te_loss, te_psnr)):
                    raise DivergenceError(
                        f"non-finite metrics at epoch {epoch}",
                        {"epoch": epoch, "step": step, "train_loss": tr_loss, "test_loss": te_loss},
                    )
                lip_f, lip_fa = empirical_lipschitz(net, Y_all, A, cfg.lipschitz_iters, cfg.seed)
            except T.NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite value while evaluating epoch {epoch}: {exc}",
                    {"epoch": epoch, "step": step, "loss": math.nan},
                ) from exc
            rec = MetricsRecord(
                epoch=epoch,
                train_loss=tr_loss,
                test_loss=te_loss,
                ge_gap=abs(te_loss - tr_loss),
                psnr=te_psnr,
                ssim=te_ssim,
                lambda1_used=float(np.mean(lam1)) if lam1 else 0.0,
                lambda2_used=float(np.mean(lam2)) if lam2 else 0.0,
                spectral_J_max=lip_f,
                spectral_JA_max=lip_fa,
                wall_time_s=time.perf_counter() - start if cfg.record_wall_time else 0.0,
                reg_steps=n_reg,
            )
            records.append(rec)
            if callback is not None:
                callback(rec)
    return net, records


def save_checkpoint(path, net):
    """16-byte header (magic, u32 version, u32 count) then little-endian float64 parameters."""
    theta = net.get_flat()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, theta.size))
        f.write(theta.astype("<f8").tobytes())


def load_checkpoint(path, net=None):
    """Parameter vector from a checkpoint; loaded into ``net`` when given."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16 or raw[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version, count = struct.unpack("<II", raw[8:16])
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    if len(raw) != 16 + 8 * count:
        raise ValueError(f"{path}: expected {count} parameters, file holds {(len(raw) - 16) // 8}")
    theta = np.frombuffer(raw, dtype="<f8", offset=16, count=count).astype(np.float64)
    if net is not None:
        if count != net.param_count:
            raise ValueError(
                f"{path}: checkpoint has {count} parameters, network expects {net.param_count}"
            )
        net.set_flat(theta)
    return theta
