"""Generalized forward-backward splitting.

Minimizes ``F + sum_i G_i`` with ``F`` smooth and every ``G_i`` simple, or more
generally finds a zero of ``B + sum_i A_i`` with ``B`` co-coercive and the
``A_i`` maximal monotone with computable resolvents. Each iteration takes one
explicit step on ``F`` and ``n`` independent proximal steps, one per ``G_i``,
on auxiliary variables ``z_i`` whose weighted barycenter is the iterate ``x``::

    z_i <- z_i + lam * (prox_{gamma/w_i G_i}(2x - z_i - gamma grad F(x)) - x)
    x   <- sum_i w_i z_i
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import zeta

from .errors import ConfigError, NumericalError
from .functions import ProxFn, SmoothFn, squared_distance
from .linops import ProductPoint, check_weights, project_S
from .split import IterateLog, SplitProblem


class CocoerciveOp(SmoothFn):
    """Single-valued operator ``B`` with ``beta B`` firmly non-expansive.

    Plays the role of a gradient; it has no objective value.
    """

    def __init__(self, apply, beta, name="B"):
        super().__init__(lambda x: math.nan, apply, beta, name)

    def apply(self, x):
        return self.gradient(x)


class ResolventOp(ProxFn):
    """Maximal monotone operator given through its resolvent ``J_{gamma A}``."""

    def __init__(self, resolvent, value=None, name="A"):
        super().__init__(value if value is not None else (lambda x: math.nan),
                         resolvent, name)

    def resolvent(self, x, gamma):
        return self.prox(x, gamma)


class PolynomialErrors:
    """Random perturbations with norm ``scale / (t + 1)**power``.

    Directions are drawn from a seeded generator and depend only on
    ``(seed, t, i)``, so runs are reproducible. The summed norms are bounded by
    ``scale * zeta(power)`` per sequence.
    """

    def __init__(self, scale=0.1, power=2.0, seed=0, prox=True, grad=True):
        self.scale = float(scale)
        self.power = float(power)
        self.seed = int(seed)
        self.prox = prox
        self.grad = grad

    @property
    def declared_total(self):
        return self.scale * float(zeta(self.power)) if self.power > 1 else math.inf

    def _draw(self, t, key, shape):
        rng = np.random.default_rng([self.seed, t, key])
        d = rng.standard_normal(shape)
        return d * (self.scale / (t + 1) ** self.power / np.linalg.norm(d))

    def prox_error(self, t, i, shape):
        return self._draw(t, i + 1, shape) if self.prox else None

    def grad_error(self, t, shape):
        return self._draw(t, 0, shape) if self.grad else None


def _schedule(value):
    return value if callable(value) else (lambda t, v=float(value): v)


@dataclass
class SolverConfig:
    """Parameters of a generalized forward-backward run.

    ``gamma`` and ``lam`` are constants or callables ``t -> value``. A ``None``
    gamma resolves to ``1.8 * beta`` during validation. ``mode`` selects the
    admissible parameter set: ``"A1"`` (constant step, relaxation up to
    ``min(3/2, (1 + 2 beta/gamma)/2)``) or ``"A2"`` (varying step, relaxation in
    ``(0, 1]``).
    """

    n: int = None
    weights: object = None
    gamma: object = None
    lam: object = 1.0
    mode: str = "A1"
    max_iter: int = 1000
    stop_tol: float = 1e-10
    errors: object = None
    workers: int = 1
    track_objective: bool = True
    validated: bool = field(default=False, repr=False)

    def gamma_at(self, t):
        return float(_schedule(self.gamma)(t))

    def lambda_at(self, t):
        return float(_schedule(self.lam)(t))


def relaxation_bound(beta, gamma_bar):
    """Upper end of the relaxation interval for a constant step ``gamma_bar``."""
    return min(1.5, (1.0 + 2.0 * beta / gamma_bar) / 2.0)


def validate_config(cfg, beta):
    """Check ``cfg`` against the convergence assumptions and resolve defaults.

    Parameters
    ----------
    cfg : SolverConfig
    beta : float
        Co-coercivity constant of the smooth part (``inf`` when absent).

    Returns
    -------
    SolverConfig
        A validated copy with weights and step size filled in.

    Raises
    ------
    ConfigError
        With ``label`` set to the violated assumption (``"A0"``, ``"A1"`` or
        ``"A2"``).
    """
    if cfg.n is None or cfg.n < 1:
        raise ConfigError("number of simple terms n must be at least 1")
    weights = np.full(cfg.n, 1.0 / cfg.n) if cfg.weights is None else np.asarray(cfg.weights, float)
    if weights.size != cfg.n:
        raise ConfigError(f"{weights.size} weights for n={cfg.n} terms")
    check_weights(weights)
    gamma = cfg.gamma
    if gamma is None:
        if math.isinf(beta):
            raise ConfigError("no smooth term: an explicit gamma is required")
        gamma = 1.8 * beta
    if cfg.max_iter < 1:
        raise ConfigError("max_iter must be positive")
    out = replace(cfg, weights=weights, gamma=gamma)
    horizon = range(cfg.max_iter)
    gammas = np.array([out.gamma_at(t) for t in horizon])
    lams = np.array([out.lambda_at(t) for t in horizon])
    if not (np.all(np.isfinite(gammas)) and np.all(np.isfinite(lams))):
        raise ConfigError("step and relaxation schedules must be finite")

    if cfg.mode == "A1":
        if not np.all(gammas == gammas[0]):
            raise ConfigError("step size must be constant", "A1")
        g = gammas[0]
        if not 0 < g < 2 * beta:
            raise ConfigError(f"gamma={g} outside ]0, 2*beta[ = ]0, {2 * beta}[", "A1")
        bound = relaxation_bound(beta, g)
        if np.any(lams <= 0) or np.any(lams >= bound):
            raise ConfigError(f"relaxation must lie in ]0, {bound}[", "A1")
    elif cfg.mode == "A2":
        if gammas.min() <= 0 or gammas.max() >= 2 * beta:
            raise ConfigError(f"step sizes must stay inside ]0, {2 * beta}[", "A2")
        if np.any(lams <= 0) or np.any(lams > 1):
            raise ConfigError("relaxation must lie in ]0, 1]", "A2")
    else:
        raise ConfigError(f"unknown mode {cfg.mode!r}; expected 'A1' or 'A2'")

    if cfg.errors is not None:
        total = getattr(cfg.errors, "declared_total", math.inf)
        if not math.isfinite(total):
            raise ConfigError("error sequences must have a finite declared sum", "A0")
    return replace(out, validated=True)


@dataclass
class GfbState:
    z: ProductPoint
    x: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, shape, weights, z0=None):
        z = ProductPoint.zeros(shape, weights) if z0 is None else z0.copy()
        return cls(z, z.barycenter(), 0)


def _gradient(F, x):
    if F is None:
        return None
    return F.gradient(x)


def _check_finite(arr, t):
    if not np.all(np.isfinite(arr)):
        raise NumericalError("non-finite iterate", t)


def _prox_all(G, args, steps, workers):
    jobs = list(zip(G, args, steps))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda j: j[0].prox(j[1], j[2]), jobs))
    return [g.prox(a, s) for g, a, s in jobs]


def _step(state, F, G, cfg, t):
    z, x = state.z, state.x
    gamma = cfg.gamma_at(t)
    lam = cfg.lambda_at(t)
    w = z.weights
    grad = _gradient(F, x)
    if grad is not None and cfg.errors is not None:
        e2 = cfg.errors.grad_error(t, x.shape)
        if e2 is not None:
            grad = grad + e2
    args = []
    for i in range(z.n):
        a = 2 * x - z.parts[i]
        if grad is not None:
            a = a - gamma * grad
        args.append(a)
    proxes = _prox_all(G, args, [gamma / wi for wi in w], cfg.workers)
    if cfg.errors is not None:
        for i in range(z.n):
            e1 = cfg.errors.prox_error(t, i, x.shape)
            if e1 is not None:
                proxes[i] = proxes[i] + e1
    parts = np.empty_like(z.parts)
    res2 = 0.0
    for i in range(z.n):
        d = proxes[i] - x
        res2 += w[i] * float(np.vdot(d, d))
        parts[i] = z.parts[i] + lam * d
    _check_finite(parts, t)
    znew = ProductPoint(parts, w)
    return GfbState(znew, znew.barycenter(), t + 1), math.sqrt(res2)


def gfb_step(state, F, G, cfg, t=None):
    """One generalized forward-backward iteration.

    Parameters
    ----------
    state : GfbState
    F : SmoothFn, CocoerciveOp or None
    G : list of ProxFn or ResolventOp
        One entry per auxiliary variable.
    cfg : SolverConfig
        Must have been through :func:`validate_config`.
    t : int, optional
        Iteration index for the schedules; defaults to ``state.t``.

    Returns
    -------
    GfbState
    """
    if not cfg.validated:
        raise ConfigError("configuration has not been validated")
    if len(G) != state.z.n:
        raise ConfigError(f"{len(G)} simple terms for {state.z.n} auxiliary variables")
    return _step(state, F, G, cfg, state.t if t is None else t)[0]


def fixed_point_residual(state, F, G, cfg, t=None):
    """Norm of ``T1 T2 z - z`` in the weighted product space.

    ``T2 = Id - gamma B P_S`` is the explicit step lifted to the product space
    and ``T1 = (R_A R_S + Id)/2`` combines the reflections through the
    componentwise resolvents and through the diagonal subspace. Computed
    exactly, without injected errors.
    """
    t = state.t if t is None else t
    z = state.z
    gamma = cfg.gamma_at(t)
    w = z.weights
    p = project_S(z)
    bx = _gradient(F, p.parts[0])
    w2 = z.parts - (0.0 if bx is None else gamma * bx[None])
    t2 = ProductPoint(w2, w)
    refl_s = 2 * project_S(t2).parts - t2.parts
    refl_a = np.stack([2 * g.prox(v, gamma / wi) - v for g, v, wi in zip(G, refl_s, w)])
    t1 = 0.5 * (refl_a + t2.parts)
    return ProductPoint(t1 - z.parts, w).norm()


def _as_gfb_problem(problem):
    if not isinstance(problem, SplitProblem):
        raise ConfigError("expected a SplitProblem")
    if problem.has_operators():
        raise ConfigError("generalized forward-backward needs every term as a plain prox "
                          "(no linear operators); introduce auxiliary variables")
    if problem.n < 1:
        raise ConfigError("at least one simple term is required")
    return problem


def gfb_solve(problem, cfg=None, z0=None, reference=None, callback=None):
    """Run generalized forward-backward iterations until the residual is small.

    Parameters
    ----------
    problem : SplitProblem
        Smooth part (may be ``None``) and simple terms without operators.
    cfg : SolverConfig, optional
        Defaults follow equal weights, ``gamma = 1.8 beta`` and ``lam = 1``.
    z0 : ProductPoint, optional
        Starting auxiliary variables; zeros by default.
    reference : ProductPoint, optional
        When given, ``||z_t - reference||`` is logged at every iteration.
    callback : callable, optional
        Called as ``callback(state)`` after every iteration.

    Returns
    -------
    x : ndarray
        The final iterate (extracted by ``problem.primal``), or the iterate with
        the lowest objective when the run did not converge.
    log : IterateLog
    """
    problem = _as_gfb_problem(problem)
    cfg = SolverConfig() if cfg is None else cfg
    if cfg.n is None:
        cfg = replace(cfg, n=problem.n)
    if cfg.n != problem.n:
        raise ConfigError(f"config declares n={cfg.n} but the problem has {problem.n} terms")
    F = problem.smooth
    beta = F.beta if F is not None else math.inf
    cfg = validate_config(cfg, beta)
    G = problem.prox_fns

    state = GfbState.initial(problem.shape, cfg.weights, z0)
    log = IterateLog()
    best = (math.inf, None)
    elapsed = 0.0
    for t in range(cfg.max_iter):
        tic = time.perf_counter()
        new, res = _step(state, F, G, cfg, t)
        if cfg.errors is not None:
            res = fixed_point_residual(state, F, G, cfg, t)
        elapsed += time.perf_counter() - tic
        prev, state = state, new
        obj = problem.psi(state.x) if cfg.track_objective else math.nan
        dist = None
        if reference is not None:
            dist = ProductPoint(state.z.parts - reference.parts, state.z.weights).norm()
        log.record(obj, res, dist, elapsed * 1e3)
        if obj < best[0]:
            best = (obj, state.x)
        if callback is not None:
            callback(state)
        if res < cfg.stop_tol:
            log.converged = True
            if cfg.errors is not None:
                # the residual certifies the point the step started from; the
                # step itself added a perturbation
                state = prev
            break
    log.final = state
    x = state.x
    if not log.converged and best[1] is not None and best[0] < log.objective[-1]:
        x = best[1]
    return problem.primal(x), log


def prox_of_sum(y, G, cfg=None):
    """``argmin_x ||x - y||^2 / 2 + sum_i G_i(x)`` by forward-backward splitting.

    The quadratic is taken as the smooth part (``beta = 1``).
    """
    y = np.asarray(y, dtype=float)
    if not G:
        return y.copy()
    smooth, _ = squared_distance(y)
    if cfg is None:
        cfg = SolverConfig(max_iter=20000, stop_tol=1e-13)
    problem = SplitProblem(y.shape, smooth, list(G))
    x, _ = gfb_solve(problem, cfg)
    return x
