"""Linear operators on images and coefficient stacks, and the weighted product space.

Vectors are plain float64 numpy arrays. Images are ``(N, N)`` arrays, wavelet
coefficients are ``(J, N, N)`` stacks and gradient fields are ``(2, N, N)``.
All convolutions use periodic boundaries so that every operator here is
diagonalized by the 2-D FFT (or is diagonal in the pixel domain).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, UnsupportedOperatorError


def _check_shape(x, shape, what="input"):
    if tuple(np.shape(x)) != tuple(shape):
        raise DimensionError(f"{what} has shape {np.shape(x)}, expected {tuple(shape)}")


def dot(a, b):
    """Euclidean inner product of two arrays of identical shape."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.vdot(a, b))


# ---------------------------------------------------------------------------
# Product space
# ---------------------------------------------------------------------------


@dataclass
class ProductPoint:
    """A tuple ``(z_1, ..., z_n)`` in the weighted product space.

    ``parts`` is stacked along the first axis, so ``parts[i]`` is ``z_i``.
    The inner product is ``sum_i weights[i] * <a_i, b_i>``.
    """

    parts: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.parts = np.asarray(self.parts, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        check_weights(self.weights)
        if self.parts.shape[0] != self.weights.size:
            raise DimensionError(
                f"{self.parts.shape[0]} parts but {self.weights.size} weights")

    @classmethod
    def zeros(cls, shape, weights):
        weights = np.asarray(weights, dtype=float)
        return cls(np.zeros((weights.size,) + tuple(shape)), weights)

    @classmethod
    def constant(cls, x, weights):
        weights = np.asarray(weights, dtype=float)
        x = np.asarray(x, dtype=float)
        return cls(np.broadcast_to(x, (weights.size,) + x.shape).copy(), weights)

    @property
    def n(self):
        return self.weights.size

    def barycenter(self):
        """Weighted mean ``sum_i w_i z_i``, summed left to right over ``i``."""
        out = self.weights[0] * self.parts[0]
        for w, z in zip(self.weights[1:], self.parts[1:]):
            out = out + w * z
        return out

    def norm(self):
        return math.sqrt(product_dot(self, self))

    def copy(self):
        return ProductPoint(self.parts.copy(), self.weights.copy())


def check_weights(weights):
    """Validate product-space weights: positive, summing to one.

    A single weight must equal one; with ``n >= 2`` each weight lies in the
    open interval ``(0, 1)``.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size < 1:
        raise ConfigError("weights must be a non-empty 1-D sequence")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ConfigError(f"weights sum to {weights.sum()!r}, expected 1")
    if weights.size > 1 and np.any((weights <= 0) | (weights >= 1)):
        raise ConfigError("each weight must lie in (0, 1)")
    if weights.size == 1 and weights[0] <= 0:
        raise ConfigError("weight must be positive")
    return weights


def product_dot(a, b):
    """Weighted inner product on the product space."""
    if a.n != b.n or not np.array_equal(a.weights, b.weights):
        raise ConfigError("product points carry different weights")
    if a.parts.shape != b.parts.shape:
        raise DimensionError(f"shape mismatch {a.parts.shape} vs {b.parts.shape}")
    return float(sum(w * np.vdot(ai, bi) for w, ai, bi in zip(a.weights, a.parts, b.parts)))


def project_S(z):
    """Orthogonal projection onto the diagonal subspace (all parts equal).

    Every part is replaced by the weighted barycenter.
    """
    return ProductPoint.constant(z.barycenter(), z.weights)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


class LinOp:
    """Bounded linear map between array spaces.

    Subclasses implement :meth:`apply` and :meth:`adjoint`. ``norm_bound`` is an
    upper bound on the operator norm. Composition is written ``A @ B``.
    """

    kind = "generic"

    def __init__(self, in_shape, out_shape, norm_bound):
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(out_shape)
        self.norm_bound = float(norm_bound)

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    def __call__(self, x):
        return self.apply(x)

    def __matmul__(self, other):
        if not isinstance(other, LinOp):
            return NotImplemented
        return ComposedOp(self, other)

    def __repr__(self):
        return f"{type(self).__name__}({self.in_shape} -> {self.out_shape})"


class IdentityOp(LinOp):
    kind = "identity"

    def __init__(self, shape):
        super().__init__(shape, shape, 1.0)

    def apply(self, x):
        return np.asarray(x, dtype=float)

    adjoint = apply

    def inv_id_plus_gamma_LLt(self, gamma, rhs):
        return np.asarray(rhs, dtype=float) / (1.0 + gamma)


class MatrixOp(LinOp):
    """Dense matrix acting on flattened arrays; intended for small problems."""

    kind = "matrix"

    def __init__(self, A, in_shape=None, out_shape=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        in_shape = (A.shape[1],) if in_shape is None else in_shape
        out_shape = (A.shape[0],) if out_shape is None else out_shape
        super().__init__(in_shape, out_shape, np.linalg.norm(A, 2))
        self.A = A

    def apply(self, x):
        return (self.A @ np.ravel(x)).reshape(self.out_shape)

    def adjoint(self, y):
        return (self.A.T @ np.ravel(y)).reshape(self.in_shape)

    def inv_id_plus_gamma_LLt(self, gamma, rhs):
        m = self.A.shape[0]
        sol = np.linalg.solve(np.eye(m) + gamma * self.A @ self.A.T, np.ravel(rhs))
        return sol.reshape(self.out_shape)


class ComposedOp(LinOp):
    """``outer @ inner``: apply ``inner`` first."""

    kind = "composed"

    def __init__(self, outer, inner):
        if outer.in_shape != inner.out_shape:
            raise DimensionError(
                f"cannot compose {outer!r} with {inner!r}: shapes do not chain")
        super().__init__(inner.in_shape, outer.out_shape,
                         outer.norm_bound * inner.norm_bound)
        self.outer = outer
        self.inner = inner

    def apply(self, x):
        return self.outer.apply(self.inner.apply(x))

    def adjoint(self, y):
        return self.inner.adjoint(self.outer.adjoint(y))

    def factors(self):
        """Flattened list of factors, outermost first."""
        out = []
        for op in (self.outer, self.inner):
            out.extend(op.factors() if isinstance(op, ComposedOp) else [op])
        return out


class Mask(LinOp):
    """Pixel masking: zero at missing pixels, identity elsewhere.

    Parameters
    ----------
    omega : bool array
        ``True`` marks a missing pixel.
    """

    kind = "mask"

    def __init__(self, omega):
        omega = np.asarray(omega, dtype=bool)
        super().__init__(omega.shape, omega.shape, 1.0)
        self.omega = omega
        self._keep = (~omega).astype(float)

    @classmethod
    def random(cls, N, rho, rng):
        """Mask with ``round(rho * N**2)`` missing pixels drawn uniformly."""
        if not 0.0 <= rho <= 1.0:
            raise ConfigError(f"missing ratio rho={rho} outside [0, 1]")
        count = int(round(rho * N * N))
        omega = np.zeros(N * N, dtype=bool)
        omega[rng.permutation(N * N)[:count]] = True
        return cls(omega.reshape(N, N))

    @property
    def rho(self):
        return float(self.omega.mean())

    def apply(self, y):
        _check_shape(y, self.in_shape)
        return self._keep * y

    adjoint = apply

    def inv_id_plus_gamma_LLt(self, gamma, rhs):
        _check_shape(rhs, self.out_shape)
        return rhs / (1.0 + gamma * self._keep)


def gaussian_kernel(sigma):
    """Sampled Gaussian on ``[-r, r]^2`` with ``r = ceil(4 sigma)``, unit mass."""
    if sigma <= 0:
        raise ConfigError(f"blur width must be positive, got {sigma}")
    r = max(1, math.ceil(4 * sigma))
    t = np.arange(-r, r + 1, dtype=float)
    g = np.exp(-t ** 2 / (2 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


class GaussianBlur(LinOp):
    """Periodic convolution with a unit-mass Gaussian kernel."""

    kind = "blur"

    def __init__(self, N, sigma):
        super().__init__((N, N), (N, N), 1.0)
        self.sigma = float(sigma)
        self.kernel = gaussian_kernel(sigma)
        r = self.kernel.shape[0] // 2
        psf = np.zeros((N, N))
        idx = np.arange(-r, r + 1) % N
        # wrap kernel support onto the periodic grid; overlaps accumulate
        np.add.at(psf, (idx[:, None], idx[None, :]), self.kernel)
        # symmetric kernel: transfer function is real
        self.transfer = np.real(np.fft.fft2(psf))
        self.psf = psf

    def apply(self, y):
        _check_shape(y, self.in_shape)
        return np.real(np.fft.ifft2(self.transfer * np.fft.fft2(y)))

    adjoint = apply

    def inv_id_plus_gamma_LLt(self, gamma, rhs):
        _check_shape(rhs, self.out_shape)
        return np.real(np.fft.ifft2(np.fft.fft2(rhs) / (1.0 + gamma * self.transfer ** 2)))


_WAVELET_FILTERS = {
    "haar": np.array([1.0, 1.0]) / 2.0,
    "db2": np.array([1 + math.sqrt(3), 3 + math.sqrt(3),
                     3 - math.sqrt(3), 1 - math.sqrt(3)]) / 8.0,
}


class WaveletFrame(LinOp):
    """Undecimated separable wavelet frame with ``WW* = Id``.

    The synthesis operator maps a ``(J, N, N)`` coefficient stack to an
    ``(N, N)`` image, ``J = 3 * levels + 1``. Channels are ordered by level
    (three detail subbands per level, finest first) followed by the coarse
    approximation. Atoms at level ``j`` have norm ``2**-j``.

    Parameters
    ----------
    N : int
        Image width; must be divisible by ``2**levels``.
    levels : int
        Number of scales.
    wavelet : {"haar", "db2"}
    """

    kind = "frame"

    def __init__(self, N, levels, wavelet="haar"):
        if levels < 1:
            raise ConfigError("wavelet frame needs at least one level")
        if N % (2 ** levels):
            raise ConfigError(f"N={N} is not divisible by 2**{levels}")
        if wavelet not in _WAVELET_FILTERS:
            raise ConfigError(f"unknown wavelet {wavelet!r}")
        J = 3 * levels + 1
        super().__init__((J, N, N), (N, N), 1.0)
        self.N = N
        self.levels = levels
        self.wavelet = wavelet
        self.J = J

        h = _WAVELET_FILTERS[wavelet]
        # quadrature mirror highpass; |H|^2 + |G|^2 = 1 on the unit circle
        g = np.array([(-1) ** k * h[len(h) - 1 - k] for k in range(len(h))])
        freqs = np.fft.fftfreq(N) * 2 * np.pi

        def response(filt, step):
            k = np.arange(len(filt)) * step
            return (filt[None, :] * np.exp(-1j * np.outer(freqs, k))).sum(axis=1)

        filters = []
        channel_levels = []
        low = np.ones(N, dtype=complex)
        for j in range(1, levels + 1):
            step = 2 ** (j - 1)
            hj = low * response(h, step)
            gj = low * response(g, step)
            filters += [np.outer(hj, gj), np.outer(gj, hj), np.outer(gj, gj)]
            channel_levels += [j, j, j]
            low = hj
        filters.append(np.outer(low, low))
        channel_levels.append(levels)
        self.filters = np.stack(filters)
        self.channel_levels = np.array(channel_levels)

    def apply(self, x):
        """Synthesis ``W x``."""
        _check_shape(x, self.in_shape)
        X = np.fft.fft2(x, axes=(-2, -1))
        return np.real(np.fft.ifft2((self.filters * X).sum(axis=0)))

    def adjoint(self, y):
        """Analysis ``W* y``."""
        _check_shape(y, self.out_shape)
        Y = np.fft.fft2(y)
        return np.real(np.fft.ifft2(np.conj(self.filters) * Y[None], axes=(-2, -1)))

    synthesis = apply
    analysis = adjoint


class ImageGradient(LinOp):
    """Finite-difference gradient by periodic convolution with 2x2 stencils.

    With the stencils ``V = [[-1, 0], [1, 0]]`` and ``H = [[-1, 1], [0, 0]]``
    anchored at their upper-left entry, the two output channels are

    ``v[i, j] = y[i-1, j] - y[i, j]`` and ``h[i, j] = y[i, j-1] - y[i, j]``.
    """

    kind = "grad"
    V = np.array([[-1.0, 0.0], [1.0, 0.0]])
    H = np.array([[-1.0, 1.0], [0.0, 0.0]])

    def __init__(self, N):
        super().__init__((N, N), (2, N, N), math.sqrt(8.0))
        self.N = N
        tv = np.zeros((N, N))
        tv[:2, :2] = self.V
        th = np.zeros((N, N))
        th[:2, :2] = self.H
        self.transfer = np.stack([np.fft.fft2(tv), np.fft.fft2(th)])

    def apply(self, y):
        _check_shape(y, self.in_shape)
        return np.stack([
            np.roll(y, 1, axis=0) - y,
            np.roll(y, 1, axis=1) - y,
        ])

    def adjoint(self, g):
        _check_shape(g, self.out_shape)
        v, h = g
        return (np.roll(v, -1, axis=0) - v) + (np.roll(h, -1, axis=1) - h)

    def inv_id_plus_gamma_LLt(self, gamma, rhs):
        # per frequency: (I + gamma t t^H)^-1 = I - gamma t t^H / (1 + gamma |t|^2)
        _check_shape(rhs, self.out_shape)
        R = np.fft.fft2(rhs, axes=(-2, -1))
        t = self.transfer
        proj = (np.conj(t) * R).sum(axis=0)
        energy = (np.abs(t) ** 2).sum(axis=0)
        out = R - gamma * t * (proj / (1.0 + gamma * energy))[None]
        return np.real(np.fft.ifft2(out, axes=(-2, -1)))

    def inv_id_plus_gamma_LtL(self, gamma, rhs):
        """``(Id + gamma grad* grad)^-1`` on images; scalar per frequency."""
        _check_shape(rhs, self.in_shape)
        energy = (np.abs(self.transfer) ** 2).sum(axis=0)
        return np.real(np.fft.ifft2(np.fft.fft2(rhs) / (1.0 + gamma * energy)))


def invert_id_plus_gamma_LLt(op, gamma, rhs):
    """Solve ``(Id + gamma * op op*) out = rhs`` in the operator's diagonal domain.

    Supported for masks (pixel domain), periodic blurs and gradients (Fourier
    domain), the identity and small dense matrices.
    """
    if gamma < 0:
        raise ConfigError(f"gamma must be non-negative, got {gamma}")
    rhs = np.asarray(rhs, dtype=float)
    if gamma == 0:
        return rhs.copy()
    solver = getattr(op, "inv_id_plus_gamma_LLt", None)
    if solver is None:
        raise UnsupportedOperatorError(
            f"no diagonalizing inversion for operator kind {op.kind!r}")
    return solver(gamma, rhs)


def split_frame_factor(L):
    """Split ``L`` as ``Phi @ W`` with ``W`` a tight frame, or ``Phi`` alone.

    Returns ``(Phi, W)`` where ``W`` may be ``None`` and ``Phi`` supports
    :func:`invert_id_plus_gamma_LLt`. Raises ``UnsupportedOperatorError`` when
    ``L`` has any other structure.
    """
    if isinstance(L, ComposedOp):
        factors = L.factors()
    else:
        factors = [L]
    W = None
    if factors and isinstance(factors[-1], WaveletFrame):
        W = factors.pop()
    factors = [f for f in factors if not isinstance(f, IdentityOp)]
    if not factors:
        return IdentityOp(L.out_shape), W
    if len(factors) == 1 and hasattr(factors[0], "inv_id_plus_gamma_LLt"):
        return factors[0], W
    raise UnsupportedOperatorError(
        f"{L!r} is not of the form Phi W with a diagonalizable Phi; "
        "introduce an auxiliary variable u = K W x and split the fidelity "
        "into a prox term on u plus a kernel-constraint indicator")
