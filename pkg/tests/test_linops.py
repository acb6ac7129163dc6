import numpy as np
import pytest

from conftest import dense_matrix
from gfbsplit import linops
from gfbsplit.errors import ConfigError, DimensionError, UnsupportedOperatorError
from gfbsplit.linops import (GaussianBlur, IdentityOp, ImageGradient, Mask, MatrixOp,
                             ProductPoint, WaveletFrame, dot, invert_id_plus_gamma_LLt,
                             product_dot, project_S)


def periodic_convolve(y, kernel):
    """Brute-force periodic convolution with a kernel centered at its middle."""
    N = y.shape[0]
    r = kernel.shape[0] // 2
    out = np.zeros_like(y)
    for i in range(N):
        for j in range(N):
            acc = 0.0
            for a in range(-r, r + 1):
                for b in range(-r, r + 1):
                    acc += kernel[a + r, b + r] * y[(i - a) % N, (j - b) % N]
            out[i, j] = acc
    return out


def operators(N=8):
    rng = np.random.default_rng(0)
    return [
        IdentityOp((N, N)),
        Mask.random(N, 0.4, rng),
        GaussianBlur(N, 0.8),
        WaveletFrame(N, 2),
        WaveletFrame(N, 2, "db2"),
        ImageGradient(N),
        MatrixOp(rng.normal(size=(5, 3))),
        Mask.random(N, 0.3, rng) @ GaussianBlur(N, 1.0) @ WaveletFrame(N, 2),
    ]


@pytest.mark.parametrize("op", operators(), ids=repr)
def test_adjoint_identity(op, rng):
    for _ in range(5):
        x = rng.normal(size=op.in_shape)
        y = rng.normal(size=op.out_shape)
        lhs = dot(op.apply(x), y)
        rhs = dot(x, op.adjoint(y))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("op", operators(), ids=repr)
def test_norm_bound_is_an_upper_bound(op):
    A = dense_matrix(op)
    assert np.linalg.norm(A, 2) <= op.norm_bound + 1e-10


def test_dot_and_product_norm():
    assert dot(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0
    z = ProductPoint(np.array([[3.0], [4.0]]), np.array([0.5, 0.5]))
    assert product_dot(z, z) == pytest.approx(12.5)
    assert z.norm() == pytest.approx(np.sqrt(12.5))


def test_barycenter_and_projection(rng):
    w = np.array([0.2, 0.3, 0.5])
    z = ProductPoint(rng.normal(size=(3, 4)), w)
    x = z.barycenter()
    np.testing.assert_allclose(x, (w[:, None] * z.parts).sum(0), atol=1e-15)
    p = project_S(z)
    assert np.all(p.parts == x[None])
    # orthogonality of the residual to the diagonal subspace
    c = ProductPoint.constant(rng.normal(size=4), w)
    r = ProductPoint(z.parts - p.parts, w)
    assert abs(product_dot(r, c)) < 1e-12


def test_weights_validation():
    with pytest.raises(ConfigError):
        ProductPoint.zeros((2,), np.array([0.5, 0.6]))
    with pytest.raises(ConfigError):
        ProductPoint.zeros((2,), np.array([1.0, 0.0]))
    ProductPoint.zeros((2,), np.array([1.0]))


def test_blur_matches_brute_force_convolution(rng):
    for sigma in (0.5, 1.0):
        op = GaussianBlur(8, sigma)
        y = rng.normal(size=(8, 8))
        k = linops.gaussian_kernel(sigma)
        assert k.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(op.apply(y), periodic_convolve(y, k), atol=1e-12)


def test_blur_rejects_bad_width():
    with pytest.raises(ConfigError):
        GaussianBlur(8, 0.0)


def test_blur_preserves_constants():
    op = GaussianBlur(16, 2.0)
    np.testing.assert_allclose(op.apply(np.ones((16, 16))), 1.0, atol=1e-12)


def test_mask_ratio_and_action(rng):
    m = Mask.random(10, 0.4, rng)
    assert m.rho == pytest.approx(0.4)
    y = rng.normal(size=(10, 10))
    out = m.apply(y)
    assert np.all(out[m.omega] == 0)
    assert np.all(out[~m.omega] == y[~m.omega])
    with pytest.raises(ConfigError):
        Mask.random(4, 1.5, rng)


def test_gradient_stencils():
    y = np.arange(16.0).reshape(4, 4) ** 2
    g = ImageGradient(4).apply(y)
    for i in range(4):
        for j in range(4):
            assert g[0, i, j] == y[i - 1, j] - y[i, j]
            assert g[1, i, j] == y[i, j - 1] - y[i, j]
    np.testing.assert_allclose(ImageGradient(4).apply(np.full((4, 4), 2.5)), 0.0)


@pytest.mark.parametrize("wavelet", ["haar", "db2"])
def test_wavelet_parseval_and_atom_norms(wavelet, rng):
    W = WaveletFrame(16, 3, wavelet)
    assert W.J == 10
    y = rng.normal(size=(16, 16))
    np.testing.assert_allclose(W.apply(W.adjoint(y)), y, atol=1e-10)
    for c, j in enumerate(W.channel_levels):
        e = np.zeros(W.in_shape)
        e[c, 5, 7] = 1.0
        assert np.linalg.norm(W.apply(e)) == pytest.approx(2.0 ** -j, rel=1e-10)


def test_wavelet_divisibility():
    with pytest.raises(ConfigError):
        WaveletFrame(12, 3)
    with pytest.raises(ConfigError):
        WaveletFrame(16, 2, "sym8")


def test_shape_checks(rng):
    with pytest.raises(DimensionError):
        GaussianBlur(8, 1.0).apply(np.zeros((4, 4)))
    with pytest.raises(DimensionError):
        WaveletFrame(8, 1) @ GaussianBlur(8, 1.0)


@pytest.mark.parametrize("make", [
    lambda rng: IdentityOp((6, 6)),
    lambda rng: Mask.random(6, 0.5, rng),
    lambda rng: GaussianBlur(6, 0.7),
    lambda rng: ImageGradient(6),
])
def test_smw_inversion_vs_dense(make, rng):
    op = make(rng)
    A = dense_matrix(op)
    for gamma in (0.3, 1.0, 4.0):
        rhs = rng.normal(size=op.out_shape)
        out = invert_id_plus_gamma_LLt(op, gamma, rhs)
        M = np.eye(A.shape[0]) + gamma * A @ A.T
        np.testing.assert_allclose(M @ np.ravel(out), np.ravel(rhs), atol=1e-10)


def test_inversion_gamma_zero_and_unsupported(rng):
    rhs = rng.normal(size=(6, 6))
    np.testing.assert_array_equal(invert_id_plus_gamma_LLt(GaussianBlur(6, 1.0), 0.0, rhs), rhs)
    composite = Mask.random(6, 0.5, rng) @ GaussianBlur(6, 1.0)
    with pytest.raises(UnsupportedOperatorError):
        invert_id_plus_gamma_LLt(composite, 1.0, rhs)
    with pytest.raises(ConfigError):
        invert_id_plus_gamma_LLt(GaussianBlur(6, 1.0), -1.0, rhs)


def test_gradient_image_domain_inverse(rng):
    op = ImageGradient(6)
    A = dense_matrix(op)
    rhs = rng.normal(size=(6, 6))
    out = op.inv_id_plus_gamma_LtL(0.7, rhs)
    np.testing.assert_allclose((np.eye(36) + 0.7 * A.T @ A) @ out.ravel(), rhs.ravel(), atol=1e-10)
