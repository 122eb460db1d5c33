"""k-space sampling masks and their PGM export.

Masks are stored centred (DC bin in the middle, as they are usually drawn);
``FourierMaskOperator`` shifts them to the transform's native layout.
"""
import math

import numpy as np

MASK_KINDS = ("cartesian1d", "random2d_center")
CENTER_FRACTION = 0.08


def _center_columns(w):
    width = math.ceil(CENTER_FRACTION * w)
    start = w // 2 - width // 2
    return np.arange(start, start + width)


def _center_disk(h, w):
    r = math.ceil(CENTER_FRACTION * min(h, w))
    ii, jj = np.mgrid[0:h, 0:w]
    return (ii - h // 2) ** 2 + (jj - w // 2) ** 2 <= r * r


def make_mask(kind, h, w, s, seed=None):
    """Binary (h, w) mask keeping a fraction ``s`` of k-space.

    ``cartesian1d`` keeps whole columns: a fully sampled centre band of
    ``ceil(0.08 w)`` columns plus uniformly drawn columns up to
    ``round(s w)``. ``random2d_center`` keeps a centre disk of radius
    ``ceil(0.08 min(h, w))`` plus uniformly drawn bins up to ``round(s h w)``.
    """
    if not 0 < s <= 1:
        raise ValueError(f"subsampling ratio must lie in (0, 1], got {s}")
    if kind not in MASK_KINDS:
        raise ValueError(f"unknown mask kind {kind!r}")
    rng = np.random.default_rng(seed)
    mask = np.zeros((h, w), dtype=np.uint8)
    if s == 1:
        mask[:] = 1
        return mask
    if kind == "cartesian1d":
        center = _center_columns(w)
        total = round(s * w)
        if total < len(center):
            raise ValueError(
                f"s={s} keeps {total} columns, fewer than the {len(center)}-column centre band"
            )
        rest = np.setdiff1d(np.arange(w), center)
        extra = rng.choice(rest, size=total - len(center), replace=False)
        mask[:, np.concatenate([center, extra])] = 1
        return mask
    disk = _center_disk(h, w)
    total = round(s * h * w)
    n_disk = int(disk.sum())
    if total < n_disk:
        raise ValueError(f"s={s} keeps {total} bins, fewer than the {n_disk}-bin centre disk")
    rest = np.flatnonzero(~disk.ravel())
    extra = rng.choice(rest, size=total - n_disk, replace=False)
    flat = disk.ravel().astype(np.uint8)
    flat[extra] = 1
    return flat.reshape(h, w)


def write_pgm(path, mask):
    """Binary PGM (P5), one byte per bin, 0 or 255."""
    mask = np.asarray(mask)
    h, w = mask.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(((mask != 0) * 255).astype(np.uint8).tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        raw = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM: magic {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("only 8-bit PGM supported")
    pos += 1
    body = np.frombuffer(raw[pos : pos + w * h], dtype=np.uint8)
    if body.size != w * h:
        raise ValueError("truncated PGM body")
    return (body.reshape(h, w) > 0).astype(np.uint8)
