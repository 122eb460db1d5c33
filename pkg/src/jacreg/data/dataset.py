"""Image datasets for reconstruction experiments."""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .idx import IMAGES_MAGIC, LABELS_MAGIC, read_idx


@dataclass
class Dataset:
    """N images in [0, 1] with disjoint train/test index lists."""

    images: np.ndarray  # (N, h, w)
    train_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    test_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    source: str = "synthetic_sparse"
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 3:
            raise ValueError("images must be (N, h, w)")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("pixel values must lie in [0, 1]")
        self.train_idx = np.asarray(self.train_idx, dtype=int)
        self.test_idx = np.asarray(self.test_idx, dtype=int)
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise ValueError("train and test indices overlap")

    def __len__(self):
        return len(self.images)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    @property
    def dim(self):
        return int(np.prod(self.image_shape))

    def flat(self, which="all"):
        idx = {"train": self.train_idx, "test": self.test_idx}.get(which)
        imgs = self.images if idx is None else self.images[idx]
        return imgs.reshape(len(imgs), -1)

    def split(self, n_train, n_test=None, seed=None):
        """Draw disjoint random train/test subsets (test = the rest by default)."""
        N = len(self)
        if n_test is None:
            n_test = N - n_train
        if n_train < 1 or n_test < 0 or n_train + n_test > N:
            raise ValueError(f"cannot split {N} images into {n_train} train + {n_test} test")
        perm = np.random.default_rng(seed).permutation(N)
        self.train_idx = np.sort(perm[:n_train])
        self.test_idx = np.sort(perm[n_train : n_train + n_test])
        return self


def load_idx(images_path, labels_path=None, limit=None):
    """MNIST-style IDX images scaled by 1/255."""
    raw = read_idx(images_path, expected_magic=IMAGES_MAGIC, limit=limit)
    labels = None
    if labels_path is not None:
        labels = read_idx(labels_path, expected_magic=LABELS_MAGIC, limit=limit)
        if len(labels) != len(raw):
            raise ValueError(f"{len(labels)} labels for {len(raw)} images")
    return Dataset(raw.astype(np.float64) / 255.0, source="idx_file", labels=labels)


def synthetic_sparse(N, p, k, seed=None, shape=None):
    """Signals with exactly ``k`` nonzeros drawn from U(0.2, 1.0) at random positions.

    ``shape`` gives the image layout (default: (1, p)).
    """
    if not 0 <= k <= p:
        raise ValueError(f"need 0 <= k <= p, got k={k}, p={p}")
    shape = tuple(shape) if shape is not None else (1, p)
    if int(np.prod(shape)) != p:
        raise ValueError(f"shape {shape} does not hold {p} entries")
    rng = np.random.default_rng(seed)
    X = np.zeros((N, p))
    for i in range(N):
        pos = rng.choice(p, size=k, replace=False)
        X[i, pos] = rng.uniform(0.2, 1.0, size=k)
    X = np.clip(X, 0.0, 1.0)
    return Dataset(X.reshape((N,) + shape), source="synthetic_sparse")


def save_cache(dataset, path):
    """Raw little-endian float64 dump plus a JSON sidecar with shape and split."""
    path = Path(path)
    np.ascontiguousarray(dataset.images, dtype="<f8").tofile(path)
    meta = {
        "shape": list(dataset.images.shape),
        "dtype": "<f8",
        "source": dataset.source,
        "train_idx": dataset.train_idx.tolist(),
        "test_idx": dataset.test_idx.tolist(),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))


def load_cache(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    images = np.fromfile(path, dtype=meta["dtype"]).reshape(meta["shape"])
    return Dataset(images, meta["train_idx"], meta["test_idx"], meta["source"])
