import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jacreg.data import (
    Dataset,
    IDXError,
    load_cache,
    load_idx,
    psnr,
    read_idx,
    save_cache,
    ssim,
    synthetic_sparse,
    write_idx,
)

# -- IDX ---------------------------------------------------------------------


def fixture_bytes():
    # two 2x2 images, assembled byte by byte
    header = bytes([0x00, 0x00, 0x08, 0x03]) + bytes([0, 0, 0, 2]) + bytes([0, 0, 0, 2]) * 2
    pixels = bytes([0, 255, 128, 64, 1, 2, 254, 32])
    return header + pixels


def test_idx_fixture_values(tmp_path):
    path = tmp_path / "imgs.idx"
    path.write_bytes(fixture_bytes())
    ds = load_idx(path)
    assert ds.images.shape == (2, 2, 2)
    expected = np.array([0, 255, 128, 64, 1, 2, 254, 32]).reshape(2, 2, 2) / 255
    np.testing.assert_array_equal(ds.images, expected)
    assert ds.source == "idx_file"


def test_idx_labels_passed_as_images(tmp_path):
    path = tmp_path / "labels.idx"
    path.write_bytes(bytes([0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3]))
    with pytest.raises(IDXError, match="bad magic"):
        load_idx(path)


def test_idx_truncated(tmp_path):
    path = tmp_path / "short.idx"
    path.write_bytes(fixture_bytes()[:-3])
    with pytest.raises(IDXError, match="truncated"):
        read_idx(path)
    path.write_bytes(fixture_bytes()[:6])
    with pytest.raises(IDXError, match="truncated"):
        read_idx(path)


def test_idx_dimension_mismatch(tmp_path):
    path = tmp_path / "long.idx"
    path.write_bytes(fixture_bytes() + b"\x00")
    with pytest.raises(IDXError, match="dimension mismatch"):
        read_idx(path)


def test_idx_limit_on_large_file(tmp_path):
    path = tmp_path / "big.idx.gz"
    write_idx(path, np.zeros((60000, 2, 2), dtype=np.uint8))
    assert len(load_idx(path, limit=10)) == 10


def test_idx_round_trip_bit_identical(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, size=(5, 3, 4), dtype=np.uint8)
    path = tmp_path / "rt.idx"
    write_idx(path, arr)
    back = read_idx(path)
    assert back.dtype == np.uint8
    np.testing.assert_array_equal(back, arr)
    write_idx(tmp_path / "rt2.idx", back)
    assert (tmp_path / "rt2.idx").read_bytes() == path.read_bytes()
    assert path.read_bytes()[:4] == struct.pack(">I", 0x803)


def test_idx_labels_loaded(tmp_path):
    write_idx(tmp_path / "i.idx", np.zeros((3, 2, 2), dtype=np.uint8))
    write_idx(tmp_path / "l.idx", np.array([7, 1, 4], dtype=np.uint8))
    ds = load_idx(tmp_path / "i.idx", tmp_path / "l.idx")
    np.testing.assert_array_equal(ds.labels, [7, 1, 4])


def test_write_idx_rejects_non_u8(tmp_path):
    with pytest.raises(IDXError):
        write_idx(tmp_path / "x.idx", np.zeros(3))


# -- datasets --------------------------------------------------------------------


def test_synthetic_sparse_counts():
    ds = synthetic_sparse(100, 64, 5, seed=0)
    X = ds.flat()
    assert np.all(np.count_nonzero(X, axis=1) == 5)
    nz = X[X > 0]
    assert nz.min() >= 0.2 and nz.max() <= 1.0


def test_synthetic_sparse_extremes():
    assert np.all(synthetic_sparse(4, 10, 0, seed=0).images == 0)
    assert np.all(synthetic_sparse(4, 10, 10, seed=0).images > 0)
    with pytest.raises(ValueError):
        synthetic_sparse(4, 10, 11)


def test_split_disjoint_and_sized():
    ds = synthetic_sparse(30, 16, 3, seed=1, shape=(4, 4)).split(10, 15, seed=2)
    assert len(ds.train_idx) == 10 and len(ds.test_idx) == 15
    assert not set(ds.train_idx) & set(ds.test_idx)
    assert ds.flat("train").shape == (10, 16)
    with pytest.raises(ValueError):
        ds.split(20, 20)


def test_dataset_rejects_out_of_range_and_overlap():
    with pytest.raises(ValueError):
        Dataset(np.full((1, 2, 2), 1.5))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2, 2)), [0, 1], [1, 2])


def test_cache_round_trip(tmp_path):
    ds = synthetic_sparse(6, 16, 4, seed=3, shape=(4, 4)).split(4, 2, seed=0)
    save_cache(ds, tmp_path / "ds.bin")
    back = load_cache(tmp_path / "ds.bin")
    np.testing.assert_array_equal(back.images, ds.images)
    np.testing.assert_array_equal(back.train_idx, ds.train_idx)
    np.testing.assert_array_equal(back.test_idx, ds.test_idx)
    assert (tmp_path / "ds.bin").stat().st_size == 6 * 16 * 8


# -- PSNR --------------------------------------------------------------------------


def test_psnr_examples():
    x = np.zeros((4, 4))
    assert psnr(x, x) == 99.0
    assert psnr(np.full((4, 4), 0.1), x) == pytest.approx(20.0, abs=1e-12)
    assert psnr(np.ones((4, 4)), x) == 0.0


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros(3), np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(
    a=arrays(np.float64, (5, 5), elements=st.floats(0, 1)),
    b=arrays(np.float64, (5, 5), elements=st.floats(0, 1)),
)
def test_psnr_symmetric(a, b):
    assert psnr(a, b) == psnr(b, a)


# -- SSIM --------------------------------------------------------------------------


def ssim_by_windows(a, b):
    """Per-window scalar SSIM with an explicit 11x11 Gaussian, averaged over valid windows."""
    r = 5
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    g = np.exp(-(xx**2 + yy**2) / (2 * 1.5**2))
    g /= g.sum()
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for i in range(a.shape[0] - 2 * r):
        for j in range(a.shape[1] - 2 * r):
            pa = a[i : i + 11, j : j + 11]
            pb = b[i : i + 11, j : j + 11]
            ma, mb = float((g * pa).sum()), float((g * pb).sum())
            va = float((g * (pa - ma) ** 2).sum())
            vb = float((g * (pb - mb) ** 2).sum())
            cov = float((g * (pa - ma) * (pb - mb)).sum())
            vals.append(
                ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
            )
    return float(np.mean(vals))


def test_ssim_identical_is_one():
    x = np.random.default_rng(0).uniform(size=(16, 16))
    assert abs(ssim(x, x) - 1.0) <= 1e-12


def test_ssim_binary_inverse_matches_window_oracle():
    x = (np.random.default_rng(1).uniform(size=(16, 14)) > 0.5).astype(float)
    assert abs(ssim(x, 1 - x) - ssim_by_windows(x, 1 - x)) <= 1e-10


def test_ssim_constant_shift_only_changes_luminance():
    x = np.random.default_rng(2).uniform(0, 0.9, size=(14, 14))
    val = ssim(x + 0.1, x)
    assert val < 1.0
    assert abs(val - ssim_by_windows(x + 0.1, x)) <= 1e-10


def test_ssim_matches_scikit_image():
    skm = pytest.importorskip("skimage.metrics")
    r = np.random.default_rng(3)
    a, b = r.uniform(size=(28, 28)), r.uniform(size=(28, 28))
    ref = skm.structural_similarity(
        a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0
    )
    assert abs(ssim(a, b) - ref) <= 1e-10


def test_ssim_errors():
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 20)), np.zeros((10, 20)))
    with pytest.raises(ValueError):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))
    with pytest.raises(ValueError):
        ssim(np.zeros(121), np.zeros(121))


@settings(max_examples=30, deadline=None)
@given(
    a=arrays(np.float64, (11, 12), elements=st.floats(0, 1)),
    b=arrays(np.float64, (11, 12), elements=st.floats(0, 1)),
)
def test_ssim_bounded(a, b):
    assert -1.0 - 1e-12 <= ssim(a, b) <= 1.0 + 1e-12
    assert abs(ssim(a, a) - 1.0) <= 1e-12
