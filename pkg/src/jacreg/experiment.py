"""Build and run one experiment from an :class:`ExperimentConfig`."""
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Network
from .data import load_idx, synthetic_sparse
from .operators import FourierMaskOperator, GaussianOperator, NoiseModel, measure
from .training import save_checkpoint, train

METRICS_HEADER = (
    "epoch", "train_loss", "test_loss", "ge_gap", "psnr", "ssim",
    "lambda1", "lambda2", "spec_j", "spec_ja", "wall_time_s",
)  # fmt: skip
RECORD_FIELDS = (
    "epoch", "train_loss", "test_loss", "ge_gap", "psnr", "ssim",
    "lambda1_used", "lambda2_used", "spectral_J_max", "spectral_JA_max", "wall_time_s",
)  # fmt: skip


@dataclass
class Problem:
    """Everything a run needs, materialised from a resolved config."""

    X_train: np.ndarray
    Y_train: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray
    operator: object
    image_shape: tuple


def build_dataset(cfg):
    d = cfg.dataset
    if d.source == "idx_file":
        ds = load_idx(d.images_path, d.labels_path, d.limit)
    else:
        p = d.height * d.width
        ds = synthetic_sparse(d.n_samples, p, d.sparsity, d.synthetic_seed, (d.height, d.width))
    return ds.split(d.n_train, d.n_test, d.split_seed)


def build_operator(cfg, image_shape):
    o = cfg.operator
    h, w = image_shape
    if o.kind == "gaussian":
        return GaussianOperator(o.q, h * w, seed=o.seed)
    return FourierMaskOperator.from_kind(o.mask_kind, h, w, o.subsample_ratio, seed=o.seed)


def build_problem(cfg):
    """Dataset, operator and noisy measurements (``cfg`` must be resolved)."""
    ds = build_dataset(cfg)
    A = build_operator(cfg, ds.image_shape)
    noise = NoiseModel(cfg.operator.noise_eta)
    rng = np.random.default_rng(cfg.operator.noise_seed)
    X_train, X_test = ds.flat("train"), ds.flat("test")
    Y_train = measure(A, X_train, noise, rng)
    Y_test = measure(A, X_test, noise, rng)
    return Problem(X_train, Y_train, X_test, Y_test, A, tuple(ds.image_shape))


def build_network(cfg, q, p):
    n = cfg.network
    width = n.hidden or p
    sizes = [q] + [width] * (n.depth - 1) + [p]
    return Network.from_sizes(sizes, rng=n.init_seed)


def format_value(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def metrics_csv(records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for rec in records:
        d = rec.as_dict()
        writer.writerow([format_value(d[k]) for k in RECORD_FIELDS])
    return buf.getvalue()


def run_experiment(cfg, out_dir=None, callback=None):
    """Train per ``cfg`` and write ``metrics.csv``, the checkpoint and ``config.resolved.json``.

    Returns ``(net, records, problem)``.
    """
    cfg = cfg.resolved()
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(cfg.to_json())
    prob = build_problem(cfg)
    net = build_network(cfg, prob.operator.out_dim, prob.operator.in_dim)
    net, records = train(
        net,
        prob.X_train,
        prob.Y_train,
        prob.operator,
        cfg.train_config(),
        prob.X_test,
        prob.Y_test,
        image_shape=prob.image_shape,
        callback=callback,
    )
    (out / "metrics.csv").write_text(metrics_csv(records))
    save_checkpoint(out / cfg.output.checkpoint, net)
    return net, records, prob
