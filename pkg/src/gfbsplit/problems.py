"""Problem builders: wavelet-domain image restoration and small synthetic
instances with known solutions.

Restoration minimizes, over frame coefficients ``x``,

    Psi(x) = ||y - Phi W x||^2 / 2 + mu ||x||_blocks + nu TV(W x)

and is returned in the shape each solver needs (auxiliary variables for the
splittings that cannot use the fidelity gradient, stacked operators for the
primal-dual methods).
"""

import itertools
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError
from .functions import (
    BlockLayer,
    ProxFn,
    block_l12,
    build_square_blocks,
    l1,
    prox_ker_constraint,
    prox_l1,
    quad_fidelity,
    quad_fidelity_prox_fn,
    squared_distance,
    tv_field,
    tv_norm,
)
from .linops import GaussianBlur, IdentityOp, ImageGradient, Mask, MatrixOp, ProductPoint, WaveletFrame
from .pgm import read_pgm
from .split import Layout, SplitProblem

ALGORITHMS = ("gfb", "fb", "dr", "chpo", "hpe", "cope")
OPERATORS = ("identity", "blur", "mask", "blur_mask")


def snr(reference, estimate):
    """Signal-to-noise ratio in dB: ``20 log10(||ref|| / ||ref - est||)``."""
    reference = np.asarray(reference, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if reference.shape != estimate.shape:
        raise ValueError("reference and estimate shapes differ")
    err = np.linalg.norm(reference - estimate)
    if err == 0:
        return math.inf
    return 20.0 * math.log10(np.linalg.norm(reference) / err)


def phantom(N=64):
    """Piecewise-smooth test image with values in [0, 1]."""
    t = (np.arange(N) + 0.5) / N
    r, c = np.meshgrid(t, t, indexing="ij")
    img = 0.15 + 0.25 * c
    img = np.where((r - 0.35) ** 2 + (c - 0.3) ** 2 < 0.18 ** 2, 0.85, img)
    img = np.where((np.abs(r - 0.7) < 0.12) & (np.abs(c - 0.65) < 0.22), 0.55, img)
    img = img + 0.3 * np.exp(-((r - 0.25) ** 2 + (c - 0.75) ** 2) / 0.01)
    stripes = (r > 0.85) & (np.sin(2 * np.pi * 6 * c) > 0)
    img = np.where(stripes, 0.05, img)
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Restoration
# ---------------------------------------------------------------------------


@dataclass
class RestorationSpec:
    """Parameters of a restoration experiment.

    ``image`` is ``"phantom"`` or a path to a PGM file. ``op`` selects the
    degradation: ``blur`` (width ``sigma``), ``mask`` (missing ratio ``rho``)
    or ``blur_mask`` (blur followed by masking). One ``seed`` drives both the
    mask and the noise.
    """

    image: str = "phantom"
    op: str = "blur"
    sigma: float = 2.0
    rho: float = 0.4
    sigma_w: float = 2.5e-2
    mu: float = 1.3e-3
    nu: float = 0.0
    S: int = 2
    levels: int = 4
    seed: int = 0
    N: int = 64
    wavelet: str = "haar"

    def __post_init__(self):
        if self.op == "mask_blur":
            self.op = "blur_mask"
        if self.op not in OPERATORS:
            raise ConfigError(f"unknown degradation {self.op!r}; choose from {OPERATORS}")
        if self.mu < 0 or self.nu < 0 or self.sigma_w < 0:
            raise ConfigError("mu, nu and sigma_w must be non-negative")
        if self.S < 1:
            raise ConfigError("block size S must be at least 1")

    @classmethod
    def from_text(cls, text):
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        casts = {"str": str, "float": float, "int": int}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            cast = casts[types[key] if isinstance(types[key], str) else types[key].__name__]
            try:
                kwargs[key] = cast(float(value)) if cast is int else cast(value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def to_text(self):
        return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n"
                       for k, v in asdict(self).items())


def _ker_indicator(L, tol=1e-9):
    """Indicator of ``{(x, u) : u = L x}``; its prox is the orthogonal projection."""
    def value(pair):
        x, u = pair
        gap = np.linalg.norm(u - L.apply(x))
        return 0.0 if gap <= tol * (1.0 + np.linalg.norm(u)) else math.inf

    return ProxFn(value, lambda pair, g: prox_ker_constraint(pair[0], pair[1], g, L), "ker")


class Restoration:
    """A built restoration problem and its per-solver splittings.

    Attributes
    ----------
    y0, y : ndarray
        Original and observed images.
    forms : dict
        Algorithm name to :class:`SplitProblem`. ``fb`` is present only when
        the problem has a single non-smooth term.
    """

    def __init__(self, spec, image=None):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        if image is None:
            image = phantom(spec.N) if spec.image == "phantom" else read_pgm(spec.image)
        y0 = np.asarray(image, dtype=float)
        if y0.ndim != 2 or y0.shape[0] != y0.shape[1]:
            raise ConfigError(f"image must be square, got shape {y0.shape}")
        N = y0.shape[0]
        self.N = N
        self.W = WaveletFrame(N, spec.levels, spec.wavelet)
        self.grad = ImageGradient(N)
        self.mask = Mask.random(N, spec.rho, rng) if "mask" in spec.op else None
        self.blur = GaussianBlur(N, spec.sigma) if "blur" in spec.op else None
        if spec.op == "identity":
            self.Phi = IdentityOp((N, N))
        elif spec.op == "blur":
            self.Phi = self.blur
        elif spec.op == "mask":
            self.Phi = self.mask
        else:
            self.Phi = self.mask @ self.blur
        self.y0 = y0
        self.y = self.Phi.apply(y0) + spec.sigma_w * rng.standard_normal((N, N))
        self.blocks = build_square_blocks(N, self.W.J, spec.S, self.W.channel_levels)
        self.L = self.Phi @ self.W
        self.gradW = self.grad @ self.W
        self.coef_shape = self.W.in_shape
        self.forms = self._build_forms()

    # objective -----------------------------------------------------------

    def psi(self, x):
        s = self.spec
        r = self.y - self.L.apply(x)
        val = 0.5 * float(np.vdot(r, r)) + s.mu * self.blocks.norm(x)
        if s.nu > 0:
            val += s.nu * tv_norm(self.gradW.apply(x))
        return val

    def image(self, x):
        """Restored image ``W x``."""
        return self.W.apply(x)

    # splittings ----------------------------------------------------------

    def _block_terms(self, lift=None):
        fns = [block_l12(layer, self.spec.mu) for layer in self.blocks.layers]
        return fns if lift is None else [lift(f) for f in fns]

    def _build_forms(self):
        s = self.spec
        J = self.coef_shape
        grid = (2, self.N, self.N)
        img = (self.N, self.N)
        composite = s.op == "blur_mask"
        tv = s.nu > 0
        forms = {}

        fidelity = quad_fidelity(self.y, self.L)

        # explicit-gradient splitting: F + block layers (+ TV on u, ker constraint)
        if tv:
            lay = Layout(x=J, u=grid)
            terms = self._block_terms(lambda f: lay.on(f, "x"))
            terms += [lay.on(tv_field(s.nu), "u"), lay.on(_ker_indicator(self.gradW), "x", "u")]
            gfb = SplitProblem(lay.shape, lay.smooth_on(fidelity, "x"), terms,
                               objective=lambda v: self.psi(lay.get(v, "x")),
                               extract=lambda v: lay.get(v, "x"), name="gfb")
            gfb.layout = lay
            gfb.lift = lambda x: lay.pack(x=x, u=self.gradW.apply(x))
        else:
            gfb = SplitProblem(J, fidelity, self._block_terms(), objective=self.psi, name="gfb")
            gfb.lift = lambda x: np.array(x, dtype=float)
        forms["gfb"] = gfb
        forms["hpe"] = gfb
        if gfb.n == 1:
            forms["fb"] = gfb

        # proximal-only splitting: fidelity as a prox term (auxiliary variables as needed)
        parts = {"x": J}
        if composite:
            parts["u1"] = img
        if tv:
            parts["u2"] = grid
        if len(parts) == 1:
            dr = SplitProblem(J, None, [quad_fidelity_prox_fn(self.y, self.L)] + self._block_terms(),
                              objective=self.psi, name="dr")
            dr.lift = lambda x: np.array(x, dtype=float)
        else:
            lay2 = Layout(**parts)
            terms = []
            if composite:
                terms += [lay2.on(quad_fidelity_prox_fn(self.y, self.mask), "u1"),
                          lay2.on(_ker_indicator(self.blur @ self.W), "x", "u1")]
            else:
                terms += [lay2.on(quad_fidelity_prox_fn(self.y, self.L), "x")]
            terms += self._block_terms(lambda f: lay2.on(f, "x"))
            if tv:
                terms += [lay2.on(tv_field(s.nu), "u2"),
                          lay2.on(_ker_indicator(self.gradW), "x", "u2")]
            dr = SplitProblem(lay2.shape, None, terms,
                              objective=lambda v: self.psi(lay2.get(v, "x")),
                              extract=lambda v: lay2.get(v, "x"), name="dr")
            dr.layout = lay2

            def lift_dr(x):
                blocks = {"x": x}
                if composite:
                    blocks["u1"] = (self.blur @ self.W).apply(x)
                if tv:
                    blocks["u2"] = self.gradW.apply(x)
                return lay2.pack(**blocks)

            dr.lift = lift_dr
        forms["dr"] = dr

        # primal-dual forms on x alone
        _, sq = squared_distance(self.y)
        cp_terms = [(sq, self.L)] + [(f, None) for f in self._block_terms()]
        cope_terms = [(f, None) for f in self._block_terms()]
        if tv:
            cp_terms.append((tv_field(s.nu), self.gradW))
            cope_terms.append((tv_field(s.nu), self.gradW))
        forms["chpo"] = SplitProblem(J, None, cp_terms, objective=self.psi, name="chpo")
        forms["cope"] = SplitProblem(J, fidelity, cope_terms, objective=self.psi, name="cope")
        for key in ("chpo", "cope"):
            forms[key].lift = lambda x: np.array(x, dtype=float)
        return forms


def build_restoration(spec, image=None):
    """Assemble a :class:`Restoration` from a :class:`RestorationSpec`."""
    if isinstance(spec, str):
        spec = RestorationSpec.from_file(spec)
    return Restoration(spec, image)


# ---------------------------------------------------------------------------
# Synthetic families
# ---------------------------------------------------------------------------


class Synthetic:
    """Small strongly convex problem with a precomputed solution.

    ``solution`` is computed by the family's own closed form or enumeration.
    ``subgradients`` are elements ``a_i`` of each ``dG_i(solution)`` with
    ``sum_i a_i = -grad F(solution)``; they determine exact fixed points of the
    generalized forward-backward operator.
    """

    def __init__(self, family, forms, solution, subgradients):
        self.family = family
        self.forms = forms
        self.solution = solution
        self.subgradients = subgradients

    def fixed_point(self, gamma, weights):
        """``z_i = x - gamma grad F(x) - (gamma / w_i) a_i`` at the solution."""
        F = self.forms["gfb"].smooth
        x = self.solution
        g = F.gradient(x)
        parts = np.stack([x - gamma * g - gamma / w * a for w, a in zip(weights, self.subgradients)])
        return ProductPoint(parts, weights)


def _forms_quadratic(shape, y_or_b, A, G):
    """Splittings of ``||A x - b||^2 / 2 + sum_i G_i`` (A = None means identity)."""
    if A is None:
        smooth, prox = squared_distance(y_or_b)
        L = None
    else:
        L = MatrixOp(A, in_shape=shape)
        smooth = quad_fidelity(y_or_b, L)
        prox = quad_fidelity_prox_fn(y_or_b, L)
        _, sq = squared_distance(y_or_b)
    forms = {
        "gfb": SplitProblem(shape, smooth, list(G)),
        "dr": SplitProblem(shape, None, [prox] + list(G)),
        "cope": SplitProblem(shape, smooth, [(g, None) for g in G]),
    }
    forms["dr"].objective = forms["gfb"].split_value
    if A is None:
        forms["chpo"] = SplitProblem(shape, None, [prox] + list(G))
    else:
        forms["chpo"] = SplitProblem(shape, None, [(sq, L)] + [(g, None) for g in G])
    forms["hpe"] = forms["gfb"]
    if len(G) == 1:
        forms["fb"] = forms["gfb"]
    return forms


def _orthant_half(idx, d):
    idx = np.asarray(idx)

    def value(x):
        return 0.0 if np.all(x[idx] >= 0) else math.inf

    def prox(x, g):
        out = np.array(x, dtype=float, copy=True)
        out[idx] = np.maximum(out[idx], 0.0)
        return out

    return ProxFn(value, prox, f"nonneg{list(idx)}")


def active_set_nnls(A, b):
    """Exact minimizer of ``||A x - b||^2 / 2`` over ``x >= 0`` by enumerating supports."""
    d = A.shape[1]
    best = None
    for support in itertools.product([False, True], repeat=d):
        P = np.flatnonzero(support)
        x = np.zeros(d)
        if P.size:
            x[P] = np.linalg.lstsq(A[:, P], b, rcond=None)[0]
        g = A.T @ (A @ x - b)
        free = np.array(support)
        if np.all(x[free] >= 0) and np.all(g[~free] >= -1e-12):
            obj = 0.5 * np.sum((A @ x - b) ** 2)
            if best is None or obj < best[0]:
                best = (obj, x)
    if best is None:
        raise RuntimeError("no KKT point found")
    return best[1]


def build_synthetic(family, d=None, seed=0, **params):
    """Build a synthetic family instance and its oracle solution.

    Families
    --------
    ``lasso-1d``
        ``||x - y||^2/2 + mu ||x||_1``; solution ``soft(y, mu)``.
    ``two-l1``
        ``||x - y||^2/2 + mu ||x||_1 + mu ||x||_1``; solution ``soft(y, 2 mu)``.
    ``group-2d``
        ``||x - y||^2/2 + mu1 ||x||_1 + mu2 sum_b ||x_b||`` on an 8x8 grid with
        2x2 groups; solution is group shrinkage of ``soft(y, mu1)``.
    ``constrained-quadratic``
        ``||A x - b||^2/2`` subject to ``x >= 0`` split over two coordinate
        halves; solution by exhaustive active-set enumeration.
    """
    rng = np.random.default_rng(seed)
    if family == "lasso-1d":
        d = d or 16
        mu = params.get("mu", 1.0)
        y = rng.uniform(-3, 3, d) if "y" not in params else np.atleast_1d(params["y"]).astype(float)
        G = [l1(mu)]
        sol = prox_l1(y, 1.0, mu)
        subs = [y - sol]
        forms = _forms_quadratic(y.shape, y, None, G)
    elif family == "two-l1":
        d = d or 16
        mu = params.get("mu", 1.0)
        y = rng.uniform(-4, 4, d) if "y" not in params else np.atleast_1d(params["y"]).astype(float)
        G = [l1(mu), l1(mu)]
        sol = prox_l1(y, 1.0, 2 * mu)
        subs = [(y - sol) / 2, (y - sol) / 2]
        forms = _forms_quadratic(y.shape, y, None, G)
    elif family == "group-2d":
        side = 8
        mu1 = params.get("mu1", 0.3)
        mu2 = params.get("mu2", 0.8)
        y = rng.normal(0, 1.2, (side, side))
        idx = np.arange(side * side).reshape(side, side)
        blocks = [idx[i:i + 2, j:j + 2].ravel() for i in range(0, side, 2) for j in range(0, side, 2)]
        layer = BlockLayer(blocks)
        G = [l1(mu1), block_l12(layer, mu2)]
        s = prox_l1(y, 1.0, mu1)
        sol = layer.prox(s, 1.0, mu2)
        subs = [y - s, s - sol]
        forms = _forms_quadratic(y.shape, y, None, G)
    elif family == "constrained-quadratic":
        d = d or 4
        m = d + 2
        A = rng.normal(size=(m, d)) / math.sqrt(m) + np.eye(m, d)
        b = rng.normal(size=m)
        halves = [np.arange(0, d // 2), np.arange(d // 2, d)]
        G = [_orthant_half(h, d) for h in halves]
        sol = active_set_nnls(A, b)
        grad = A.T @ (A @ sol - b)
        subs = []
        for h in halves:
            a = np.zeros(d)
            a[h] = -grad[h]
            subs.append(a)
        forms = _forms_quadratic((d,), b, A, G)
    else:
        raise ConfigError(f"unknown synthetic family {family!r}")
    return Synthetic(family, forms, sol, subs)


SYNTHETIC_FAMILIES = ("lasso-1d", "two-l1", "group-2d", "constrained-quadratic")
