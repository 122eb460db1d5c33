"""Reader/writer for the IDX binary format used by MNIST.

Layout (big-endian): two zero bytes, a type code (0x08 = unsigned byte), the
number of dimensions, one u32 per dimension, then the raw data. Files ending
in ``.gz`` are transparently decompressed.
"""
import gzip
import struct

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IDXError(ValueError):
    pass


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def read_idx(path, expected_magic=None, limit=None):
    """Return the u8 array stored in an IDX file (first axis cut to ``limit``)."""
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise IDXError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if expected_magic is not None and magic != expected_magic:
        raise IDXError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if magic >> 8 != 0x08:
        raise IDXError(f"{path}: bad magic 0x{magic:08x} (only unsigned-byte IDX supported)")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IDXError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims)) if dims else 0
    if len(raw) - header < count:
        raise IDXError(f"{path}: truncated data ({len(raw) - header} of {count} bytes)")
    if len(raw) - header > count:
        raise IDXError(f"{path}: dimension mismatch ({len(raw) - header} bytes for dims {dims})")
    arr = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)
    if limit is not None:
        arr = arr[:limit]
    return arr.copy()


def write_idx(path, array):
    """Write a u8 array as IDX (gzip-compressed if ``path`` ends in ``.gz``)."""
    arr = np.ascontiguousarray(array)
    if arr.dtype != np.uint8:
        raise IDXError("only uint8 arrays can be written")
    magic = 0x00000800 | arr.ndim
    header = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(str(path), "wb") as f:
        f.write(header + arr.tobytes())
