"""Problem containers shared by all solvers, and stacked-variable layouts."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .functions import ProxFn, SmoothFn


@dataclass
class SplitProblem:
    """``min_v F(v) + sum_i G_i(L_i v)`` over arrays of shape ``shape``.

    Attributes
    ----------
    shape : tuple
        Shape of the optimization variable.
    smooth : SmoothFn or None
        The differentiable term ``F``.
    terms : list of (ProxFn, LinOp or None)
        Simple terms; ``None`` stands for the identity.
    objective : callable or None
        Reported objective ``Psi``. Defaults to ``F + sum_i G_i o L_i``. Split
        forms with auxiliary variables override it to evaluate the original
        objective on the primary block.
    extract : callable or None
        Maps the variable to the quantity of interest (e.g. drops auxiliary
        blocks). Defaults to the identity.
    """

    shape: tuple
    smooth: SmoothFn = None
    terms: list = field(default_factory=list)
    objective: object = None
    extract: object = None
    name: str = ""

    def __post_init__(self):
        self.shape = tuple(self.shape)
        self.terms = [t if isinstance(t, tuple) else (t, None) for t in self.terms]
        for g, L in self.terms:
            if not isinstance(g, ProxFn):
                raise ConfigError(f"term {g!r} is not a ProxFn")
            if L is not None and L.in_shape != self.shape:
                raise DimensionError(f"operator {L!r} does not act on shape {self.shape}")

    @property
    def n(self):
        return len(self.terms)

    @property
    def prox_fns(self):
        return [g for g, _ in self.terms]

    def has_operators(self):
        return any(L is not None for _, L in self.terms)

    def split_value(self, v):
        """``F(v) + sum_i G_i(L_i v)`` for this particular splitting."""
        total = self.smooth.value(v) if self.smooth is not None else 0.0
        for g, L in self.terms:
            total += g.value(v if L is None else L.apply(v))
            if math.isinf(total):
                return total
        return total

    def psi(self, v):
        if self.objective is not None:
            return float(self.objective(v))
        return self.split_value(v)

    def primal(self, v):
        return v if self.extract is None else self.extract(v)


class Layout:
    """Named blocks packed into one flat float vector."""

    def __init__(self, **shapes):
        self.names = list(shapes)
        self.shapes = {k: tuple(s) for k, s in shapes.items()}
        self.slices = {}
        start = 0
        for k in self.names:
            size = int(np.prod(self.shapes[k]))
            self.slices[k] = slice(start, start + size)
            start += size
        self.size = start

    @property
    def shape(self):
        return (self.size,)

    def get(self, v, name):
        return v[self.slices[name]].reshape(self.shapes[name])

    def pack(self, **parts):
        v = np.zeros(self.size)
        for k, arr in parts.items():
            v[self.slices[k]] = np.ravel(arr)
        return v

    def on(self, fn, *names):
        """Lift a :class:`ProxFn` acting on the listed blocks to the full vector.

        With one name, ``fn`` acts on that block's array. With several, ``fn``
        receives and returns a tuple of arrays. Other blocks pass through the
        prox unchanged.
        """
        def parts(v):
            return tuple(self.get(v, k) for k in names)

        def value(v):
            p = parts(v)
            return fn.value(p[0] if len(names) == 1 else p)

        def prox(v, gamma):
            out = np.array(v, dtype=float, copy=True)
            p = parts(v)
            res = fn.prox(p[0] if len(names) == 1 else p, gamma)
            if len(names) == 1:
                res = (res,)
            for k, r in zip(names, res):
                out[self.slices[k]] = np.ravel(r)
            return out

        return ProxFn(value, prox, f"{fn.name}[{','.join(names)}]")

    def smooth_on(self, fn, name):
        def value(v):
            return fn.value(self.get(v, name))

        def gradient(v):
            g = np.zeros(self.size)
            g[self.slices[name]] = np.ravel(fn.gradient(self.get(v, name)))
            return g

        return SmoothFn(value, gradient, fn.beta, f"{fn.name}[{name}]")


@dataclass
class IterateLog:
    """Per-iteration diagnostics.

    Row ``k`` describes the state after ``k + 1`` iterations: the objective at
    the new iterate, the fixed-point residual of the point the step started
    from, the optional distance to a reference and the elapsed solver time.
    """

    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    distance: list = field(default_factory=list)
    time_ms: list = field(default_factory=list)
    converged: bool = False
    final: object = None

    def __len__(self):
        return len(self.residual)

    def record(self, objective, residual, distance, time_ms):
        self.objective.append(objective)
        self.residual.append(residual)
        if distance is not None:
            self.distance.append(distance)
        self.time_ms.append(time_ms)

    def rows(self):
        for k in range(len(self)):
            yield k + 1, self.objective[k], self.residual[k], self.time_ms[k]
