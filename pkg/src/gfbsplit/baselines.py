"""Comparison solvers: forward-backward, product-space Douglas-Rachford,
Chambolle-Pock, block-decomposition HPE and Combettes-Pesquet primal-dual.

All solvers take a :class:`~gfbsplit.split.SplitProblem` in the shape they
require and return ``(x, IterateLog)``. None of them relies on the
generalized forward-backward implementation.
"""

import math
import time

import numpy as np

from .errors import ConfigError, NumericalError
from .linops import ProductPoint, check_weights, project_S
from .split import IterateLog


class _Clock:
    def __init__(self):
        self.elapsed = 0.0

    def __enter__(self):
        self._tic = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed += time.perf_counter() - self._tic

    @property
    def ms(self):
        return self.elapsed * 1e3


def _finite(arr, t):
    if not np.all(np.isfinite(arr)):
        raise NumericalError("non-finite iterate", t)


def _weights(weights, n):
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if w.size != n:
        raise ConfigError(f"{w.size} weights for {n} terms")
    return check_weights(w)


def _plain_terms(problem, algo):
    if problem.has_operators():
        raise ConfigError(f"{algo} needs every term as a plain prox (no linear operators)")
    if problem.n < 1:
        raise ConfigError(f"{algo} needs at least one simple term")
    return problem.prox_fns


def _op(L, v):
    return v if L is None else L.apply(v)


def _adj(L, v):
    return v if L is None else L.adjoint(v)


def _norm2(L):
    return 1.0 if L is None else L.norm_bound ** 2


def fb_solve(problem, gamma=None, lam=1.0, max_iter=1000, stop_tol=0.0, x0=None):
    """Relaxed forward-backward for ``F + G`` with a single simple ``G``.

    ``x <- x + lam * (prox_{gamma G}(x - gamma grad F(x)) - x)``
    """
    G = _plain_terms(problem, "forward-backward")
    if len(G) != 1:
        raise ConfigError(
            f"forward-backward handles exactly one non-smooth term, got n={len(G)}")
    if problem.smooth is None:
        raise ConfigError("forward-backward needs a smooth term")
    g, F = G[0], problem.smooth
    gamma = 1.8 * F.beta if gamma is None else float(gamma)
    if not 0 < gamma < 2 * F.beta:
        raise ConfigError(f"gamma={gamma} outside ]0, 2*beta[")
    x = np.zeros(problem.shape) if x0 is None else np.array(x0, dtype=float)
    log = IterateLog()
    clock = _Clock()
    for t in range(max_iter):
        with clock:
            d = g.prox(x - gamma * F.gradient(x), gamma) - x
            x = x + lam * d
            _finite(x, t)
        res = float(np.linalg.norm(d))
        log.record(problem.psi(x), res, None, clock.ms)
        if res < stop_tol:
            log.converged = True
            break
    return problem.primal(x), log


def dr_solve(problem, gamma=None, lam=1.0, weights=None, max_iter=1000, stop_tol=0.0,
             z0=None):
    """Relaxed Douglas-Rachford on the weighted product space.

    Solves ``min sum_i G_i`` through ``z <- z + lam (J(R_S z) - P_S z)``, where
    ``P_S`` is the projection on the diagonal, ``R_S = 2 P_S - Id`` and ``J``
    applies ``prox_{gamma/w_i G_i}`` componentwise.

    Parameters
    ----------
    gamma : float, optional
        Defaults to ``1/n``.
    lam : float or callable
        Relaxation in ``]0, 2[``.
    """
    if problem.smooth is not None:
        raise ConfigError("Douglas-Rachford takes no smooth term; recast it as a prox term")
    G = _plain_terms(problem, "Douglas-Rachford")
    n = len(G)
    w = _weights(weights, n)
    gamma = 1.0 / n if gamma is None else float(gamma)
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    lam_at = lam if callable(lam) else (lambda t, v=float(lam): v)
    for t in range(max_iter):
        if not 0 < lam_at(t) < 2:
            raise ConfigError("relaxation must lie in ]0, 2[")

    z = ProductPoint.zeros(problem.shape, w) if z0 is None else z0.copy()
    log = IterateLog()
    clock = _Clock()
    for t in range(max_iter):
        with clock:
            p = project_S(z)
            r = 2 * p.parts - z.parts
            jr = np.stack([g.prox(ri, gamma / wi) for g, ri, wi in zip(G, r, w)])
            step = ProductPoint(jr - p.parts, w)
            z = ProductPoint(z.parts + lam_at(t) * step.parts, w)
            _finite(z.parts, t)
            x = z.barycenter()
        res = step.norm()
        log.record(problem.psi(x), res, None, clock.ms)
        if res < stop_tol:
            log.converged = True
            break
    log.final = z
    return problem.primal(z.barycenter()), log


def chpo_tau(sigma, op_norm2, safety=0.9):
    """Primal step ``safety / (sigma * ||Lambda||^2)``."""
    return safety / (sigma * op_norm2)


def chpo_solve(problem, sigma=1.0, tau=None, theta=1.0, max_iter=1000, stop_tol=0.0):
    """Chambolle-Pock primal-dual iterations for ``min_x sum_i G_i(L_i x)``.

    With ``Lambda = (L_1, ..., L_m)`` stacked and dual variables ``y_i``::

        y_i  <- prox_{sigma G_i*}(y_i + sigma L_i xbar)
        x'   <- x - tau sum_i L_i* y_i
        xbar <- x' + theta (x' - x)

    ``tau`` defaults to ``0.9 / (sigma * sum_i ||L_i||^2)``.
    """
    if problem.smooth is not None:
        raise ConfigError("Chambolle-Pock form takes no smooth term; add it as a G_i o L_i term")
    if problem.n < 1:
        raise ConfigError("at least one term is required")
    norm2 = sum(_norm2(L) for _, L in problem.terms)
    tau = chpo_tau(sigma, norm2) if tau is None else float(tau)
    if not (sigma > 0 and tau > 0 and sigma * tau * norm2 < 1):
        raise ConfigError(f"step sizes violate sigma*tau*||Lambda||^2 < 1 "
                          f"(sigma={sigma}, tau={tau}, ||Lambda||^2<={norm2})")
    x = np.zeros(problem.shape)
    xbar = x.copy()
    ys = [np.zeros(L.out_shape if L is not None else problem.shape) for _, L in problem.terms]
    log = IterateLog()
    clock = _Clock()
    for t in range(max_iter):
        with clock:
            ys_new = [g.prox_conjugate(y + sigma * _op(L, xbar), sigma)
                      for (g, L), y in zip(problem.terms, ys)]
            back = sum(_adj(L, y) for (_, L), y in zip(problem.terms, ys_new))
            x_new = x - tau * back
            xbar = x_new + theta * (x_new - x)
            _finite(x_new, t)
            res = float(np.linalg.norm(x_new - x)) + math.sqrt(
                sum(float(np.sum((a - b) ** 2)) for a, b in zip(ys_new, ys)))
            x, ys = x_new, ys_new
        log.record(problem.psi(x), res, None, clock.ms)
        if res < stop_tol:
            log.converged = True
            break
    return problem.primal(x), log


def hpe_step_size(varsigma, beta):
    """``varsigma * 2 varsigma beta / (1 + sqrt(1 + 4 varsigma^2 beta^2))``."""
    if not 0 < varsigma <= 1:
        raise ConfigError(f"varsigma={varsigma} outside ]0, 1]")
    if math.isinf(beta):
        return varsigma ** 2
    return varsigma * 2 * varsigma * beta / (1 + math.sqrt(1 + 4 * varsigma ** 2 * beta ** 2))


def hpe_solve(problem, varsigma=0.9, weights=None, max_iter=1000, stop_tol=0.0):
    """Block-decomposition hybrid proximal extragradient iterations.

    Works on ``min F(sum_i w_i z_i) + sum_i G_i(z_i)`` subject to all ``z_i``
    being equal, with dual variables ``v_i`` and their barycenter ``u``::

        z_i <- prox_{gamma/w_i G_i}(gamma^2 x + (1-gamma^2) z_i - gamma grad F(x) + gamma (v_i - u))
        v_i <- v_i - gamma z_i + gamma x
        x   <- sum_i w_i z_i
        u   <- sum_i w_i v_i
    """
    G = _plain_terms(problem, "HPE")
    n = len(G)
    w = _weights(weights, n)
    F = problem.smooth
    beta = F.beta if F is not None else math.inf
    gamma = hpe_step_size(varsigma, beta)
    z = np.zeros((n,) + problem.shape)
    v = np.zeros_like(z)
    x = np.zeros(problem.shape)
    u = np.zeros(problem.shape)
    log = IterateLog()
    clock = _Clock()
    for t in range(max_iter):
        with clock:
            grad = F.gradient(x) if F is not None else 0.0
            base = gamma ** 2 * x - gamma * grad - gamma * u
            z_new = np.stack([
                g.prox(base + (1 - gamma ** 2) * z[i] + gamma * v[i], gamma / w[i])
                for i, g in enumerate(G)])
            v = v - gamma * z_new + gamma * x
            x = ProductPoint(z_new, w).barycenter()
            u = ProductPoint(v, w).barycenter()
            _finite(z_new, t)
            res = ProductPoint(z_new - z, w).norm()
            z = z_new
        log.record(problem.psi(x), res, None, clock.ms)
        if res < stop_tol:
            log.converged = True
            break
    return problem.primal(x), log


def cope_step_bound(beta, terms):
    """``1 / (1/beta + sqrt(sum_i ||L_i||^2))``."""
    lip = 0.0 if math.isinf(beta) else 1.0 / beta
    return 1.0 / (lip + math.sqrt(sum(_norm2(L) for _, L in terms)))


def cope_solve(problem, gamma=None, max_iter=1000, stop_tol=0.0):
    """Combettes-Pesquet primal-dual iterations for ``F + sum_i G_i o L_i``.

    Two gradient evaluations and two calls to each ``L_i`` and ``L_i*`` per
    iteration; dual variables start at zero. ``gamma`` defaults to 0.9 times
    the admissible bound.
    """
    if problem.n < 1:
        raise ConfigError("at least one term is required")
    F = problem.smooth
    beta = F.beta if F is not None else math.inf
    bound = cope_step_bound(beta, problem.terms)
    gamma = 0.9 * bound if gamma is None else float(gamma)
    if not 0 < gamma < bound:
        raise ConfigError(f"gamma={gamma} outside ]0, {bound}[")

    def grad(v):
        return F.gradient(v) if F is not None else 0.0

    x = np.zeros(problem.shape)
    vs = [np.zeros(L.out_shape if L is not None else problem.shape) for _, L in problem.terms]
    log = IterateLog()
    clock = _Clock()
    for t in range(max_iter):
        with clock:
            y = x - gamma * (grad(x) + sum(_adj(L, v) for (_, L), v in zip(problem.terms, vs)))
            ps = []
            vs_new = []
            for (g, L), v in zip(problem.terms, vs):
                zi = v + gamma * _op(L, x)
                p = g.prox_conjugate(zi, gamma)
                ps.append(p)
                vs_new.append(v - zi + p + gamma * _op(L, y))
            x_new = x - gamma * (grad(y) + sum(_adj(L, p) for (_, L), p in zip(problem.terms, ps)))
            _finite(x_new, t)
            res = float(np.linalg.norm(x_new - x)) + math.sqrt(
                sum(float(np.sum((a - b) ** 2)) for a, b in zip(vs_new, vs)))
            x, vs = x_new, vs_new
        log.record(problem.psi(x), res, None, clock.ms)
        if res < stop_tol:
            log.converged = True
            break
    return problem.primal(x), log
