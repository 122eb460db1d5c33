import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jacreg.autodiff import tensor as T
from jacreg.operators import (
    FourierMaskOperator,
    GaussianOperator,
    MatrixOperator,
    NoiseModel,
    make_mask,
    measure,
    read_pgm,
    sample_noise,
    write_pgm,
)
from jacreg.operators import fourier as F


def direct_dft2(x):
    """O(n^2) unitary 2-D DFT written straight from the definition."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=complex)
    for k in range(h):
        for l in range(w):
            acc = 0j
            for m in range(h):
                for n in range(w):
                    acc += x[m, n] * np.exp(-2j * np.pi * (k * m / h + l * n / w))
            out[k, l] = acc
    return out / np.sqrt(h * w)


def full_mask_op(h=4, w=4):
    return FourierMaskOperator(np.ones((h, w)))


# -- apply -------------------------------------------------------------------


def test_gaussian_hand_set_apply():
    A = MatrixOperator([[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(A.apply([3.0, 4.0, 5.0]), [3.0, 4.0])


def test_fourier_full_mask_is_embedding(rng):
    A = full_mask_op(8, 8)
    x = rng.standard_normal(64)
    out = A.apply(x)
    assert out.shape == (128,)
    assert np.max(np.abs(out - np.concatenate([x, np.zeros(64)]))) <= 1e-10


def test_fourier_apply_matches_materialized_on_impulse():
    A = FourierMaskOperator.from_kind("random2d_center", 8, 8, 0.2, seed=3)
    x = np.zeros(64)
    x[0] = 1.0
    M = A.materialize()
    assert np.max(np.abs(M @ x - A.apply(x))) <= 1e-10


def test_fourier_matches_numpy_reference(rng):
    mask = make_mask("cartesian1d", 8, 16, 0.25, seed=1)
    A = FourierMaskOperator(mask)
    x = rng.standard_normal((8, 16))
    ref = np.fft.ifft2(np.fft.ifftshift(mask) * np.fft.fft2(x, norm="ortho"), norm="ortho")
    out = A.apply(x.ravel())
    np.testing.assert_allclose(out[:128], ref.real.ravel(), atol=1e-12)
    np.testing.assert_allclose(out[128:], ref.imag.ravel(), atol=1e-12)


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        MatrixOperator(np.eye(3)).apply(np.ones(4))
    with pytest.raises(ValueError):
        full_mask_op().apply(np.ones(15))


# -- adjoint -----------------------------------------------------------------


def test_adjoint_row():
    A = MatrixOperator([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(A.apply_adjoint([1.0, 0.0]), [1.0, 2.0])


def test_fourier_full_mask_adjoint_recovers(rng):
    A = full_mask_op()
    x = rng.standard_normal(16)
    np.testing.assert_allclose(A.apply_adjoint(np.concatenate([x, np.zeros(16)])), x, atol=1e-12)


def test_adjoint_dimension_mismatch():
    with pytest.raises(ValueError):
        MatrixOperator(np.eye(3)).apply_adjoint(np.ones(2))


@pytest.mark.parametrize(
    "make",
    [
        lambda: GaussianOperator(20, 50, seed=0),
        lambda: FourierMaskOperator.from_kind("cartesian1d", 8, 8, 0.5, seed=1),
        lambda: FourierMaskOperator.from_kind("random2d_center", 16, 8, 0.3, seed=2),
    ],
)
def test_adjoint_identity_1000_trials(make):
    A = make()
    r = np.random.default_rng(0)
    X = r.standard_normal((1000, A.in_dim))
    U = r.standard_normal((1000, A.out_dim))
    lhs = np.sum(U * A.apply(X), axis=1)
    rhs = np.sum(A.apply_adjoint(U) * X, axis=1)
    scale = np.linalg.norm(U, axis=1) * np.linalg.norm(X, axis=1)
    assert np.all(np.abs(lhs - rhs) <= 1e-10 * scale)


def test_operator_on_tape_backpropagates_adjoint(rng):
    A = GaussianOperator(5, 7, seed=4)
    x = T.Tensor(rng.standard_normal(7), requires_grad=True)
    u = rng.standard_normal(5)
    (g,) = T.grad([T.inner(A(x), u)], [x])
    np.testing.assert_allclose(g.data, A.matrix.T @ u, atol=1e-14)


# -- materialize ---------------------------------------------------------------


def test_materialize_gaussian_bit_exact():
    A = GaussianOperator(10, 30, seed=5)
    np.testing.assert_array_equal(A.materialize(), A.matrix)


def test_materialize_full_mask_is_stacked_identity():
    M = full_mask_op(4, 4).materialize()
    assert M.shape == (32, 16)
    np.testing.assert_allclose(M, np.vstack([np.eye(16), np.zeros((16, 16))]), atol=1e-12)


def test_materialize_self_consistent(rng):
    A = FourierMaskOperator.from_kind("cartesian1d", 8, 8, 0.5, seed=7)
    x = rng.standard_normal(64)
    assert np.max(np.abs(A.materialize() @ x - A.apply(x))) <= 1e-10


def test_materialize_size_guard():
    A = FourierMaskOperator(np.ones((32, 32)))  # 2048 x 1024 > 1e6 entries
    with pytest.raises(MemoryError):
        A.materialize()


# -- Lipschitz bound ------------------------------------------------------------


def test_lipschitz_diag():
    assert MatrixOperator(np.diag([3.0, 2.0])).lipschitz_bound() == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("kind,s", [("cartesian1d", 0.25), ("random2d_center", 0.2)])
def test_lipschitz_fourier_is_one(kind, s):
    A = FourierMaskOperator.from_kind(kind, 16, 16, s, seed=0)
    assert abs(A.lipschitz_bound("svd") - 1.0) <= 1e-6
    assert abs(A.lipschitz_bound("power") - 1.0) <= 1e-6


def test_lipschitz_gaussian_matches_svd_and_power():
    A = GaussianOperator(40, 784, seed=0)
    svd = np.linalg.svd(A.matrix, compute_uv=False)[0]
    assert A.lipschitz_bound("svd") == pytest.approx(svd, rel=1e-12)
    assert A.lipschitz_bound("power") == pytest.approx(svd, rel=1e-6)


def test_lipschitz_large_fourier_uses_power():
    A = FourierMaskOperator.from_kind("cartesian1d", 32, 32, 0.25, seed=0)
    assert abs(A.lipschitz_bound() - 1.0) <= 1e-6


# -- FFT -----------------------------------------------------------------------


def test_fft2_impulse():
    x = np.zeros((4, 4))
    x[0, 0] = 1.0
    np.testing.assert_allclose(F.fft2(x), np.full((4, 4), 0.25), atol=1e-15)


def test_fft2_constant():
    c = 0.7
    out = F.fft2(np.full((4, 4), c))
    expected = np.zeros((4, 4), dtype=complex)
    expected[0, 0] = 4 * c
    np.testing.assert_allclose(out, expected, atol=1e-14)


def test_fft2_parseval_and_direct_dft(rng):
    x = rng.standard_normal((8, 8))
    X = F.fft2(x)
    assert abs(np.linalg.norm(x) - np.linalg.norm(X)) <= 1e-12
    assert np.max(np.abs(X - direct_dft2(x))) <= 1e-10


def test_fft2_inverse_round_trip(rng):
    x = rng.standard_normal((16, 32)) + 1j * rng.standard_normal((16, 32))
    assert np.max(np.abs(F.ifft2(F.fft2(x)) - x)) <= 1e-12


def test_fft_direct_fallback_for_small_non_power_of_two(rng):
    x = rng.standard_normal((6, 10))
    np.testing.assert_allclose(F.fft2(x), np.fft.fft2(x, norm="ortho"), atol=1e-12)
    np.testing.assert_allclose(F.ifft2(F.fft2(x)), x, atol=1e-12)


def test_fft_unsupported_size():
    with pytest.raises(ValueError):
        F.fft(np.ones(65))


def test_fftshift_matches_numpy(rng):
    x = rng.standard_normal((6, 8))
    np.testing.assert_array_equal(F.fftshift(x), np.fft.fftshift(x))
    np.testing.assert_array_equal(F.ifftshift(x), np.fft.ifftshift(x))


# -- masks ---------------------------------------------------------------------


def test_mask_full_ratio():
    for kind in ("cartesian1d", "random2d_center"):
        np.testing.assert_array_equal(make_mask(kind, 8, 8, 1.0, seed=0), np.ones((8, 8)))


def test_cartesian_mask_column_count():
    m = make_mask("cartesian1d", 16, 16, 0.25, seed=0)
    cols = np.flatnonzero(m.any(axis=0))
    assert len(cols) == 4
    assert np.all(m[:, cols] == 1)
    band = int(np.ceil(0.08 * 16))
    centre = np.arange(16 // 2 - band // 2, 16 // 2 - band // 2 + band)
    assert set(centre) <= set(cols)


def test_random2d_mask_ratio():
    m = make_mask("random2d_center", 32, 32, 0.2, seed=0)
    assert 0.195 <= m.sum() / 1024 <= 0.205
    r = int(np.ceil(0.08 * 32))
    yy, xx = np.mgrid[:32, :32]
    disk = (yy - 16) ** 2 + (xx - 16) ** 2 <= r * r
    assert np.all(m[disk] == 1)


def test_mask_ratio_below_centre_share():
    with pytest.raises(ValueError):
        make_mask("random2d_center", 32, 32, 0.01, seed=0)
    with pytest.raises(ValueError):
        make_mask("cartesian1d", 16, 16, 0.0, seed=0)
    with pytest.raises(ValueError):
        make_mask("spiral", 16, 16, 0.5, seed=0)


def test_subsample_ratio_within_one_over_p():
    A = FourierMaskOperator.from_kind("random2d_center", 32, 32, 0.2, seed=4)
    assert abs(A.subsample_ratio - 0.2) <= 1 / 1024


def test_pgm_round_trip(tmp_path):
    m = make_mask("random2d_center", 16, 12, 0.3, seed=1)
    path = tmp_path / "mask.pgm"
    write_pgm(path, m)
    assert path.read_bytes().startswith(b"P5")
    np.testing.assert_array_equal(read_pgm(path), m)


# -- noise ---------------------------------------------------------------------


def test_noise_zero():
    np.testing.assert_array_equal(sample_noise(NoiseModel(0.0), 40), np.zeros(40))


@pytest.mark.parametrize("eta,dim", [(0.3, 40), (5.0, 2048)])
def test_noise_norm_exact(eta, dim):
    n = sample_noise(NoiseModel(eta, seed=0), dim)
    assert abs(np.linalg.norm(n) - eta) <= 1e-12


def test_noise_rows_and_measure(rng):
    A = GaussianOperator(10, 20, seed=0)
    X = rng.standard_normal((6, 20))
    Y = measure(A, X, NoiseModel(0.3), rng=1)
    np.testing.assert_allclose(np.linalg.norm(Y - A.apply(X), axis=1), 0.3, atol=1e-12)
    np.testing.assert_array_equal(measure(A, X), A.apply(X))


def test_noise_negative_eta():
    with pytest.raises(ValueError):
        NoiseModel(-1.0)


# -- properties ----------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), s=st.floats(0.2, 1.0), kind=st.sampled_from(["cartesian1d", "random2d_center"]))
def test_mask_projection_is_idempotent(seed, s, kind):
    A = FourierMaskOperator.from_kind(kind, 8, 16, s, seed=seed)
    r = np.random.default_rng(seed)
    x = r.standard_normal(128)
    once = A.apply(x)
    z = once[:128] + 1j * once[128:]
    twice = F.ifft2(A._kmask * F.fft2(z.reshape(8, 16))).ravel()
    assert np.max(np.abs(twice - z)) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), s=st.floats(0.2, 1.0))
def test_nonempty_mask_has_unit_norm(seed, s):
    A = FourierMaskOperator.from_kind("random2d_center", 8, 8, s, seed=seed)
    assert abs(A.lipschitz_bound("svd") - 1.0) <= 1e-6


def test_gaussian_column_norms_average_one():
    means = [np.mean(np.sum(GaussianOperator(50, 200, seed=s).matrix ** 2, axis=0)) for s in range(5)]
    assert abs(np.mean(means) - 1.0) <= 0.1


def test_real_input_norm_without_conjugate_pair():
    # a lone k-space bin with no mirror partner keeps half the energy of any real image
    mask = np.zeros((8, 8))
    mask[2, 5] = 1
    A = FourierMaskOperator(mask)
    assert abs(A.lipschitz_bound("svd") - np.sqrt(0.5)) <= 1e-12
    mask[6, 3] = 1  # add the mirror bin (centred indexing)
    assert abs(FourierMaskOperator(mask).lipschitz_bound("svd") - 1.0) <= 1e-12
