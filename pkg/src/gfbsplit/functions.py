"""Smooth and simple functions: values, gradients and proximity operators.

A :class:`ProxFn` wraps ``G`` with ``prox(x, gamma) = argmin_y ||x - y||^2 / 2 + gamma G(y)``.
A :class:`SmoothFn` wraps ``F`` with its gradient and a constant ``beta`` such
that the gradient is ``1/beta``-Lipschitz.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .linops import IdentityOp, MatrixOp, invert_id_plus_gamma_LLt, split_frame_factor


class SmoothFn:
    """Differentiable convex function with Lipschitz gradient."""

    def __init__(self, value, gradient, beta, name="F"):
        if not beta > 0:
            raise ConfigError(f"beta must be positive, got {beta}")
        self._value = value
        self._gradient = gradient
        self.beta = float(beta)
        self.name = name

    def value(self, x):
        return float(self._value(x))

    def gradient(self, x):
        return self._gradient(x)

    __call__ = value

    def __repr__(self):
        return f"SmoothFn({self.name}, beta={self.beta:g})"


class ProxFn:
    """Convex function with a computable proximity operator.

    ``value`` may return ``inf`` (indicators). The prox of an indicator
    ignores ``gamma``.
    """

    def __init__(self, value, prox, name="G"):
        self._value = value
        self._prox = prox
        self.name = name

    def value(self, x):
        return float(self._value(x))

    def prox(self, x, gamma):
        if gamma < 0:
            raise ConfigError(f"prox step must be non-negative, got {gamma}")
        if gamma == 0:
            if isinstance(x, tuple):
                return tuple(np.array(p, dtype=float, copy=True) for p in x)
            return np.array(x, dtype=float, copy=True)
        return self._prox(x, gamma)

    def prox_conjugate(self, x, gamma):
        """Prox of ``gamma G*`` through Moreau's identity."""
        return x - gamma * self.prox(x / gamma, 1.0 / gamma)

    __call__ = value

    def __repr__(self):
        return f"ProxFn({self.name})"


def zero_function(name="zero"):
    return ProxFn(lambda x: 0.0, lambda x, g: np.array(x, dtype=float, copy=True), name)


# ---------------------------------------------------------------------------
# Sparsity
# ---------------------------------------------------------------------------


def prox_l1(x, gamma, mu=1.0):
    """Soft-thresholding ``sign(x) * max(|x| - gamma*mu, 0)``."""
    if gamma < 0 or mu < 0:
        raise ConfigError("gamma and mu must be non-negative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - gamma * mu, 0.0)


def l1(mu=1.0):
    return ProxFn(lambda x: mu * np.abs(x).sum(), lambda x, g: prox_l1(x, g, mu), f"{mu:g}*l1")


def _group_shrink(x, norms, thresh):
    # zero when ||x_b|| <= threshold (boundary included)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > thresh, 1.0 - thresh / np.where(norms > 0, norms, 1.0), 0.0)
    return scale


class BlockLayer:
    """A set of pairwise disjoint blocks of flat indices with per-block weights.

    Entries not covered by any block are left unchanged by the prox.
    """

    def __init__(self, blocks, weights=None, size=None):
        self.blocks = [np.asarray(b, dtype=np.intp).ravel() for b in blocks]
        self.weights = (np.ones(len(self.blocks)) if weights is None
                        else np.asarray(weights, dtype=float))
        if len(self.weights) != len(self.blocks):
            raise ConfigError("one weight per block is required")
        seen = np.concatenate(self.blocks) if self.blocks else np.empty(0, np.intp)
        if np.unique(seen).size != seen.size:
            raise ConfigError("blocks within a layer must not overlap")
        self.size = size

    def index_sets(self):
        return [frozenset(b.tolist()) for b in self.blocks]

    def norm(self, x):
        flat = np.ravel(x)
        return float(sum(w * np.linalg.norm(flat[b]) for w, b in zip(self.weights, self.blocks)))

    def prox(self, x, gamma, mu=1.0):
        x = np.asarray(x, dtype=float)
        out = x.copy().ravel()
        flat = x.ravel()
        for w, b in zip(self.weights, self.blocks):
            sub = flat[b]
            nrm = np.linalg.norm(sub)
            out[b] = _group_shrink(sub, nrm, gamma * mu * w) * sub
        return out.reshape(x.shape)


class SquareBlockLayer:
    """Periodic ``S x S`` spatial tiles at a fixed offset, per channel.

    Acts on ``(J, N, N)`` stacks. Tile ``(p, q)`` of channel ``c`` covers rows
    ``a + p*S ... a + p*S + S - 1`` and columns ``b + q*S ...`` (mod ``N``).
    The block weight is ``channel_weights[c]``.
    """

    def __init__(self, shape, S, offset, channel_weights):
        J, N, N2 = shape
        if N != N2:
            raise DimensionError("square blocks need square images")
        if S > N:
            raise ConfigError(f"block size S={S} exceeds image width N={N}")
        if N % S:
            raise ConfigError(f"N={N} is not divisible by block size S={S}")
        self.shape = (J, N, N)
        self.S = S
        self.offset = tuple(offset)
        self.channel_weights = np.asarray(channel_weights, dtype=float)

    def _tiles(self, x):
        J, N, _ = self.shape
        S = self.S
        a, b = self.offset
        r = np.roll(x, (-a, -b), axis=(1, 2))
        return r.reshape(J, N // S, S, N // S, S)

    def _untile(self, t):
        a, b = self.offset
        return np.roll(t.reshape(self.shape), (a, b), axis=(1, 2))

    def norm(self, x):
        t = self._tiles(np.asarray(x, dtype=float))
        norms = np.sqrt((t ** 2).sum(axis=(2, 4)))
        return float((self.channel_weights[:, None, None] * norms).sum())

    def prox(self, x, gamma, mu=1.0):
        x = np.asarray(x, dtype=float)
        if x.shape != self.shape:
            raise DimensionError(f"expected shape {self.shape}, got {x.shape}")
        t = self._tiles(x)
        norms = np.sqrt((t ** 2).sum(axis=(2, 4)))
        thresh = gamma * mu * self.channel_weights[:, None, None]
        scale = _group_shrink(t, norms, thresh)
        return self._untile(t * scale[:, :, None, :, None])

    def index_sets(self):
        """Explicit flat index sets, for inspection and tests."""
        J, N, _ = self.shape
        S = self.S
        a, b = self.offset
        idx = np.arange(J * N * N).reshape(J, N, N)
        t = self._tiles(idx)
        return [frozenset(t[c, p, :, q, :].ravel().tolist())
                for c in range(J) for p in range(N // S) for q in range(N // S)]


@dataclass
class BlockStructure:
    """A block structure given as a union of non-overlapping layers."""

    layers: list = field(default_factory=list)

    def blocks(self):
        return [blk for layer in self.layers for blk in layer.index_sets()]

    def norm(self, x):
        return sum(layer.norm(x) for layer in self.layers)


def prox_block_l12(x, gamma, layer, mu=1.0):
    """Block soft-thresholding over one non-overlapping layer.

    Each block ``b`` is scaled by ``1 - gamma*mu*mu_b/||x_b||`` or zeroed when
    its norm does not exceed the threshold.
    """
    if gamma < 0 or mu < 0:
        raise ConfigError("gamma and mu must be non-negative")
    if isinstance(layer, (list, tuple)):
        layer = BlockLayer(layer)
    return layer.prox(x, gamma, mu)


def block_l12(layer, mu=1.0):
    return ProxFn(lambda x: mu * layer.norm(x),
                  lambda x, g: layer.prox(x, g, mu),
                  f"{mu:g}*block_l12")


def build_square_blocks(N, J, S, channel_levels=None):
    """All ``S x S`` periodic spatial blocks per channel, as ``S**2`` layers.

    Block weights are ``2**-j`` for a channel at level ``j``. Without
    ``channel_levels`` every weight is 1.
    """
    if S < 1:
        raise ConfigError("block size must be at least 1")
    if S > N:
        raise ConfigError(f"block size S={S} exceeds image width N={N}")
    if channel_levels is None:
        weights = np.ones(J)
    else:
        weights = 2.0 ** -np.asarray(channel_levels, dtype=float)
        if weights.size != J:
            raise ConfigError("one level per channel is required")
    layers = [SquareBlockLayer((J, N, N), S, (a, b), weights)
              for a, b in itertools.product(range(S), range(S))]
    return BlockStructure(layers)


# ---------------------------------------------------------------------------
# Total variation
# ---------------------------------------------------------------------------


def tv_norm(g):
    """Sum over pixels of the Euclidean norm of the 2-vector ``(v_p, h_p)``."""
    g = np.asarray(g, dtype=float)
    if g.ndim < 1 or g.shape[0] != 2:
        raise DimensionError(f"gradient field needs 2 channels, got shape {g.shape}")
    return float(np.sqrt(g[0] ** 2 + g[1] ** 2).sum())


def prox_tv_field(g, gamma, nu=1.0):
    """Pixelwise 2-block soft-thresholding of a gradient field."""
    g = np.asarray(g, dtype=float)
    norms = np.sqrt(g[0] ** 2 + g[1] ** 2)
    return g * _group_shrink(g, norms, gamma * nu)[None]


def tv_field(nu=1.0):
    return ProxFn(lambda g: nu * tv_norm(g), lambda g, s: prox_tv_field(g, s, nu), f"{nu:g}*tv")


# ---------------------------------------------------------------------------
# Quadratic data fidelity
# ---------------------------------------------------------------------------


def quad_fidelity(y, L):
    """``F(x) = ||y - L x||^2 / 2`` with gradient ``L*(L x - y)``."""
    y = np.asarray(y, dtype=float)
    if y.shape != L.out_shape:
        raise DimensionError(f"observation shape {y.shape} does not match {L.out_shape}")
    bound = L.norm_bound

    def value(x):
        r = y - L.apply(x)
        return 0.5 * float(np.vdot(r, r))

    def gradient(x):
        return L.adjoint(L.apply(x) - y)

    return SmoothFn(value, gradient, 1.0 / bound ** 2 if bound > 0 else math.inf, "quad_fidelity")


def _solve_id_plus_gamma_LtL(L, gamma, r):
    """``(Id + gamma L* L)^-1 r`` via Sherman-Morrison-Woodbury."""
    if isinstance(L, MatrixOp):
        n = L.A.shape[1]
        sol = np.linalg.solve(np.eye(n) + gamma * L.A.T @ L.A, np.ravel(r))
        return sol.reshape(L.in_shape)
    Phi, W = split_frame_factor(L)
    t = W.apply(r) if W is not None else r
    t = Phi.apply(t)
    t = invert_id_plus_gamma_LLt(Phi, gamma, t)
    t = Phi.adjoint(t)
    t = W.adjoint(t) if W is not None else t
    return r - gamma * t


def prox_quad_fidelity(x, gamma, y, L):
    """Prox of ``gamma ||y - L .||^2 / 2``: ``(Id + gamma L*L)^-1 (x + gamma L* y)``.

    ``L`` must be ``Phi`` or ``Phi @ W`` with ``W`` a tight frame and ``Phi`` a
    mask, blur, identity or dense matrix. Composite degradations such as
    ``M @ K @ W`` raise :class:`UnsupportedOperatorError`.
    """
    if gamma < 0:
        raise ConfigError(f"gamma must be non-negative, got {gamma}")
    x = np.asarray(x, dtype=float)
    if gamma == 0:
        return x.copy()
    if isinstance(L, IdentityOp):
        return (x + gamma * np.asarray(y, dtype=float)) / (1.0 + gamma)
    r = x + gamma * L.adjoint(y)
    return _solve_id_plus_gamma_LtL(L, gamma, r)


def quad_fidelity_prox_fn(y, L):
    """The fidelity as a :class:`ProxFn` (for splittings that never take gradients)."""
    f = quad_fidelity(y, L)
    return ProxFn(f.value, lambda x, g: prox_quad_fidelity(x, g, y, L), "quad_fidelity")


def prox_ker_constraint(x, u, gamma, L):
    """Orthogonal projection of ``(x, u)`` onto ``{(x, u) : u = L x}``.

    ``gamma`` is accepted for interface uniformity and ignored. The x-part
    solves ``(Id + L*L) x' = x + L* u``; the u-part is ``L x'``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != L.in_shape or u.shape != L.out_shape:
        raise DimensionError("(x, u) shapes do not match the operator")
    r = x + L.adjoint(u)
    if isinstance(L, IdentityOp):
        xp = r / 2.0
    else:
        xp = _solve_id_plus_gamma_LtL(L, 1.0, r)
    return xp, L.apply(xp)


def indicator_nonneg():
    return ProxFn(lambda x: 0.0 if np.all(np.asarray(x) >= 0) else math.inf,
                  lambda x, g: np.maximum(x, 0.0), "nonneg")


def indicator_box(lo, hi):
    def value(x):
        x = np.asarray(x)
        return 0.0 if np.all((x >= lo) & (x <= hi)) else math.inf
    return ProxFn(value, lambda x, g: np.clip(x, lo, hi), f"box[{lo:g},{hi:g}]")


def indicator_point(c):
    c = np.asarray(c, dtype=float)

    def value(x):
        return 0.0 if np.allclose(x, c, rtol=0, atol=1e-9) else math.inf

    return ProxFn(value, lambda x, g: c.copy(), "point")


def squared_distance(y, weight=1.0):
    """``weight * ||x - y||^2 / 2`` as a smooth and a proximable function."""
    y = np.asarray(y, dtype=float)
    smooth = SmoothFn(lambda x: 0.5 * weight * float(np.sum((x - y) ** 2)),
                      lambda x: weight * (x - y), 1.0 / weight, "sqdist")
    prox = ProxFn(smooth.value, lambda x, g: (x + g * weight * y) / (1.0 + g * weight), "sqdist")
    return smooth, prox
