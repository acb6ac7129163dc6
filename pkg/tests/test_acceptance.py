"""Acceptance criteria 1-8. Each test prints one PASS/FAIL line with its runtime."""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, dense_matrix
from gfbsplit.baselines import chpo_solve, cope_solve, dr_solve, fb_solve, hpe_solve
from gfbsplit.cli import run_algorithm
from gfbsplit.errors import ConfigError
from gfbsplit.functions import (BlockLayer, block_l12, indicator_box, indicator_nonneg,
                                indicator_point, l1, prox_block_l12, prox_ker_constraint,
                                prox_l1, prox_quad_fidelity, quad_fidelity)
from gfbsplit.gfb import (GfbState, PolynomialErrors, SolverConfig, gfb_solve, gfb_step,
                          relaxation_bound, validate_config)
from gfbsplit.linops import (GaussianBlur, IdentityOp, ImageGradient, Mask, MatrixOp,
                             ProductPoint, WaveletFrame, dot)
from gfbsplit.problems import (SYNTHETIC_FAMILIES, RestorationSpec, build_restoration,
                               build_synthetic)
from gfbsplit.gfb import prox_of_sum


@contextmanager
def criterion(number, title, budget_s):
    notes = {}
    tic = time.perf_counter()
    status = "FAIL"
    try:
        yield notes
        elapsed = time.perf_counter() - tic
        status = "PASS" if elapsed < budget_s else "FAIL"
    finally:
        elapsed = time.perf_counter() - tic
        detail = "; ".join(f"{k}={v}" for k, v in notes.items())
        line = (f"criterion {number}: {status} {title} "
                f"[{elapsed:.2f}s, budget {budget_s}s] {detail}").rstrip()
        print(line)
        ACCEPTANCE_LINES.append(line)
    assert elapsed < budget_s, f"runtime {elapsed:.2f}s over budget {budget_s}s"


def fne_holds(f, u, v):
    d = np.ravel(f(u) - f(v))
    return d @ d <= d @ np.ravel(u - v) + 1e-10


# ---------------------------------------------------------------------------
# 1. prox correctness
# ---------------------------------------------------------------------------


def test_criterion_1_prox_correctness():
    rng = np.random.default_rng(1)
    with criterion(1, "prox correctness (analytic/dense oracles, firm nonexpansiveness)", 10) as n:
        worst = {}

        # soft-thresholding vs the elementwise case analysis
        err = 0.0
        for _ in range(60):
            x = rng.normal(size=20) * 3
            t = rng.uniform(0, 2)
            ref = np.array([v - t if v > t else v + t if v < -t else 0.0 for v in x])
            err = max(err, np.max(np.abs(prox_l1(x, t, 1.0) - ref)))
        worst["l1"] = err

        # block soft-thresholding vs per-block formula
        blocks = [[0, 4, 7], [1, 2], [3, 5, 6, 8]]
        wts = [0.25, 1.0, 0.5]
        layer = BlockLayer(blocks, wts)
        err = 0.0
        for _ in range(60):
            x = rng.normal(size=10) * 2
            g, mu = rng.uniform(0.1, 3), rng.uniform(0.1, 1)
            ref = x.copy()
            for b, w in zip(blocks, wts):
                nb = math.sqrt(sum(x[k] ** 2 for k in b))
                ref[b] = 0.0 if nb <= g * mu * w else (1 - g * mu * w / nb) * x[b]
            err = max(err, np.max(np.abs(prox_block_l12(x, g, layer, mu) - ref)))
        worst["block"] = err

        # fidelity prox vs dense solve of (Id + g L*L) p = x + g L* y
        N = 6
        W = WaveletFrame(N, 1)
        ops = [Mask.random(N, 0.4, rng) @ W, GaussianBlur(N, 0.8) @ W, Mask.random(N, 0.5, rng)]
        err = 0.0
        for L in ops:
            A = dense_matrix(L)
            for _ in range(20):
                x = rng.normal(size=L.in_shape)
                y = rng.normal(size=L.out_shape)
                g = rng.uniform(0.1, 4)
                ref = np.linalg.solve(np.eye(A.shape[1]) + g * A.T @ A,
                                      x.ravel() + g * A.T @ y.ravel())
                err = max(err, np.max(np.abs(prox_quad_fidelity(x, g, y, L).ravel() - ref)))
        worst["fidelity"] = err

        # kernel projection vs the dense orthogonal projector onto {(x, Lx)}
        err = 0.0
        for L in (GaussianBlur(N, 0.8) @ W, ImageGradient(N) @ W):
            A = dense_matrix(L)
            B = np.vstack([np.eye(A.shape[1]), A])
            P = B @ np.linalg.solve(B.T @ B, B.T)
            for _ in range(30):
                x = rng.normal(size=L.in_shape)
                u = rng.normal(size=L.out_shape)
                xp, up = prox_ker_constraint(x, u, 1.0, L)
                ref = P @ np.concatenate([x.ravel(), u.ravel()])
                err = max(err, np.max(np.abs(np.concatenate([xp.ravel(), up.ravel()]) - ref)))
        worst["ker"] = err
        for k, v in worst.items():
            n[k] = f"{v:.1e}"
        assert max(worst.values()) <= 1e-8

        # firm nonexpansiveness, 100 random pairs per operator
        L = GaussianBlur(N, 0.8) @ W
        yobs = rng.normal(size=(N, N))
        ops = {
            "l1": (lambda a: prox_l1(a, 0.7), (12,)),
            "block": (lambda a: prox_block_l12(a, 1.3, layer, 0.6), (10,)),
            "fidelity": (lambda a: prox_quad_fidelity(a, 0.9, yobs, L), L.in_shape),
        }
        for name, (f, shape) in ops.items():
            for _ in range(100):
                u, v = rng.normal(size=(2,) + shape) * 2
                assert fne_holds(f, u, v), name
        for _ in range(100):
            x1, x2 = rng.normal(size=(2,) + L.in_shape)
            u1, u2 = rng.normal(size=(2,) + L.out_shape)
            p1 = np.concatenate([np.ravel(p) for p in prox_ker_constraint(x1, u1, 1.0, L)])
            p2 = np.concatenate([np.ravel(p) for p in prox_ker_constraint(x2, u2, 1.0, L)])
            d = p1 - p2
            diff = np.concatenate([(x1 - x2).ravel(), (u1 - u2).ravel()])
            assert d @ d <= d @ diff + 1e-10
        n["fne_pairs"] = 400


# ---------------------------------------------------------------------------
# 2. operator algebra
# ---------------------------------------------------------------------------


def test_criterion_2_operator_algebra():
    rng = np.random.default_rng(2)
    with criterion(2, "operator algebra (adjoints, Parseval, SMW, gradients)", 10) as n:
        N = 64
        W = WaveletFrame(N, 4)
        Wd = WaveletFrame(N, 4, "db2")
        K = GaussianBlur(N, 2.0)
        M = Mask.random(N, 0.4, rng)
        G = ImageGradient(N)
        ops = [IdentityOp((N, N)), M, K, W, Wd, G, M @ K @ W, G @ W,
               MatrixOp(rng.normal(size=(7, 4)))]
        adj = 0.0
        for op in ops:
            for _ in range(3):
                x = rng.normal(size=op.in_shape)
                y = rng.normal(size=op.out_shape)
                a, b = dot(op.apply(x), y), dot(x, op.adjoint(y))
                adj = max(adj, abs(a - b) / max(1.0, abs(a)))
        n["adjoint"] = f"{adj:.1e}"
        assert adj <= 1e-10

        pars = 0.0
        for frame in (W, Wd):
            y = rng.normal(size=(N, N))
            pars = max(pars, np.max(np.abs(frame.apply(frame.adjoint(y)) - y)))
        n["parseval"] = f"{pars:.1e}"
        assert pars <= 1e-10

        smw = 0.0
        for L in (K @ W, M @ W, W, K, M):
            y = rng.normal(size=L.out_shape)
            x = rng.normal(size=L.in_shape)
            for g in (0.1, 1.8, 10.0):
                p = prox_quad_fidelity(x, g, y, L)
                r = p + g * L.adjoint(L.apply(p)) - (x + g * L.adjoint(y))
                smw = max(smw, float(np.linalg.norm(r)))
        n["smw_residual"] = f"{smw:.1e}"
        assert smw <= 1e-8

        fd = 0.0
        for L in (K @ W, M @ W):
            f = quad_fidelity(rng.normal(size=(N, N)), L)
            for _ in range(3):
                x = rng.normal(size=L.in_shape)
                d = rng.normal(size=L.in_shape)
                h = 1e-4
                num = (f.value(x + h * d) - f.value(x - h * d)) / (2 * h)
                ana = dot(f.gradient(x), d)
                fd = max(fd, abs(num - ana) / abs(ana))
        n["grad_fd_rel"] = f"{fd:.1e}"
        assert fd <= 1e-5


# ---------------------------------------------------------------------------
# 3. reduction identities
# ---------------------------------------------------------------------------


def test_criterion_3_reductions():
    with criterion(3, "reductions (GFB n=1 = FB, GFB with B=0 = DR)", 5) as n:
        fb_err = 0.0
        one_term = build_restoration(RestorationSpec(op="blur", S=1, N=16, levels=2)).forms["fb"]
        for p in (build_synthetic("lasso-1d").forms["gfb"], one_term):
            cfg = validate_config(SolverConfig(n=1), p.smooth.beta)
            state = GfbState.initial(p.shape, cfg.weights)
            x = np.zeros(p.shape)
            for _ in range(200):
                state = gfb_step(state, p.smooth, p.prox_fns, cfg)
                x, _ = fb_solve(p, max_iter=1, x0=x)
                fb_err = max(fb_err, float(np.max(np.abs(state.x - x))))
        n["fb_max_diff"] = f"{fb_err:.1e}"
        assert fb_err <= 1e-14

        dr_err = 0.0
        restoration = build_restoration(RestorationSpec(op="blur_mask", nu=5e-3, S=2, N=16,
                                                        levels=2))
        for p in (build_synthetic("group-2d").forms["dr"], restoration.forms["dr"]):
            cfg = validate_config(SolverConfig(n=p.n, gamma=1.0 / p.n, lam=1.0), math.inf)
            state = GfbState.initial(p.shape, cfg.weights)
            z = ProductPoint.zeros(p.shape, cfg.weights)
            for _ in range(200):
                state = gfb_step(state, None, p.prox_fns, cfg)
                _, log = dr_solve(p, max_iter=1, z0=z)
                z = log.final
                dr_err = max(dr_err, float(np.max(np.abs(state.z.parts - z.parts))))
        n["dr_max_diff"] = f"{dr_err:.1e}"
        assert dr_err <= 1e-12


# ---------------------------------------------------------------------------
# 4. solution agreement
# ---------------------------------------------------------------------------


def test_criterion_4_solution_agreement():
    with criterion(4, "all solvers reach synthetic oracles (rel 1e-5), GFB residual < 1e-8",
                   60) as n:
        worst = 0.0
        for family in SYNTHETIC_FAMILIES:
            syn = build_synthetic(family)
            ref = syn.solution
            scale = max(np.linalg.norm(ref), 1.0)
            x, log = gfb_solve(syn.forms["gfb"], SolverConfig(max_iter=20000, stop_tol=1e-12))
            assert min(log.residual) < 1e-8, family
            results = {"gfb": x}
            results["dr"] = dr_solve(syn.forms["dr"], max_iter=20000, stop_tol=1e-13)[0]
            results["chpo"] = chpo_solve(syn.forms["chpo"], max_iter=20000, stop_tol=1e-13)[0]
            results["hpe"] = hpe_solve(syn.forms["hpe"], max_iter=20000, stop_tol=1e-13)[0]
            results["cope"] = cope_solve(syn.forms["cope"], max_iter=20000, stop_tol=1e-13)[0]
            if "fb" in syn.forms:
                results["fb"] = fb_solve(syn.forms["fb"], max_iter=20000, stop_tol=1e-13)[0]
            for algo, xa in results.items():
                rel = np.linalg.norm(xa - ref) / scale
                worst = max(worst, rel)
                assert rel < 1e-5, (family, algo, rel)
        n["worst_rel_err"] = f"{worst:.1e}"


# ---------------------------------------------------------------------------
# 5. convergence diagnostics
# ---------------------------------------------------------------------------


def test_criterion_5_convergence_diagnostics():
    with criterion(5, "Fejer monotonicity, summable-error robustness, near-bound relaxation",
                   60) as n:
        worst_step = -math.inf
        for family in SYNTHETIC_FAMILIES:
            syn = build_synthetic(family)
            p = syn.forms["gfb"]
            gamma = 1.8 * p.smooth.beta
            ref = syn.fixed_point(gamma, np.full(p.n, 1.0 / p.n))
            for lam in (1.0, 1.05):
                _, log = gfb_solve(p, SolverConfig(lam=lam, max_iter=2000, stop_tol=0),
                                   reference=ref)
                worst_step = max(worst_step, float(np.max(np.diff(log.distance))))
        n["max_distance_increase"] = f"{worst_step:.1e}"
        assert worst_step <= 1e-10

        moved = 0.0
        for family, y in (("lasso-1d", 3.0), ("two-l1", 3.0), ("lasso-1d", -0.4)):
            p = build_synthetic(family, d=1, y=y).forms["gfb"]
            exact, _ = gfb_solve(p, SolverConfig(max_iter=5000, stop_tol=1e-14))
            noisy, _ = gfb_solve(p, SolverConfig(max_iter=5000, stop_tol=1e-14,
                                                 errors=PolynomialErrors(0.1, 2, seed=3)))
            moved = max(moved, float(np.linalg.norm(noisy - exact) /
                                     max(np.linalg.norm(exact), 1.0)))
        n["error_shift_rel"] = f"{moved:.1e}"
        assert moved < 1e-5

        bound = relaxation_bound(1.0, 1.8)
        assert bound == pytest.approx(1.0555555555555556, rel=1e-15)
        syn = build_synthetic("two-l1")
        x, log = gfb_solve(syn.forms["gfb"], SolverConfig(lam=0.99 * bound, max_iter=20000,
                                                          stop_tol=1e-12))
        assert log.converged
        err = float(np.max(np.abs(x - syn.solution)))
        n["near_bound_err"] = f"{err:.1e}"
        assert err < 1e-8


# ---------------------------------------------------------------------------
# 6. configuration gate
# ---------------------------------------------------------------------------


def test_criterion_6_config_gate():
    with criterion(6, "parameter validation rejects with assumption labels", 1) as n:
        cases = [
            (dict(gamma=2.0), "A1"),
            (dict(gamma=0.0), "A1"),
            (dict(gamma=1.8, lam=relaxation_bound(1.0, 1.8)), "A1"),
            (dict(gamma=1.8, lam=0.0), "A1"),
            (dict(gamma=0.2, lam=1.5), "A1"),
            (dict(mode="A2", gamma=1.0, lam=1.2), "A2"),
            (dict(mode="A2", gamma=lambda t: 1.0 + t / 20), "A2"),
            (dict(mode="A2", gamma=1.0, lam=0.0), "A2"),
            (dict(errors=PolynomialErrors(0.1, 1.0)), "A0"),
        ]
        for kwargs, label in cases:
            with pytest.raises(ConfigError) as info:
                validate_config(SolverConfig(n=2, max_iter=50, **kwargs), 1.0)
            assert info.value.label == label, kwargs
        ok = validate_config(SolverConfig(n=2, gamma=1.8, lam=1.0), 1.0)
        assert ok.validated
        validate_config(SolverConfig(n=2, mode="A2", gamma=1.99, lam=1.0), 1.0)
        n["rejected"] = len(cases)


# ---------------------------------------------------------------------------
# 7. desk-scale protocol
# ---------------------------------------------------------------------------


def test_criterion_7_desk_scale_protocol():
    spec = RestorationSpec(op="blur_mask", sigma=2.0, rho=0.4, mu=5.0e-4, nu=5.0e-3, S=4,
                           N=64, levels=4, seed=0)
    with criterion(7, "N=64 composite+TV: GFB objective at iteration 100 within 0.1% of best",
                   300) as n:
        r = build_restoration(spec)
        final = {}
        for algo in ("gfb", "dr", "chpo", "hpe", "cope"):
            _, log = run_algorithm(r, algo, 100)
            assert len(log) == 100
            final[algo] = log.objective[-1]
        best = min(final.values())
        for k, v in final.items():
            n[k] = f"{v:.5g}"
        # soft criterion: a miss is reported as a reproduction deviation
        if final["gfb"] > 1.001 * best:
            n["deviation"] = "gfb not within 0.1% of the best objective"
            pytest.xfail("reproduction deviation: gfb did not reach the minimum objective")


# ---------------------------------------------------------------------------
# 8. prox of a sum
# ---------------------------------------------------------------------------


def test_criterion_8_prox_of_sum():
    rng = np.random.default_rng(8)
    with criterion(8, "prox_of_sum reductions and combined l1 thresholds", 5) as n:
        y = rng.normal(size=(8, 8)) * 2
        layer = BlockLayer([np.arange(k, k + 4) for k in range(0, 64, 4)])
        singles = [
            (l1(0.6), prox_l1(y, 1.0, 0.6)),
            (indicator_nonneg(), np.maximum(y, 0)),
            (indicator_box(-0.5, 1.0), np.clip(y, -0.5, 1.0)),
            (block_l12(layer, 0.9), layer.prox(y, 1.0, 0.9)),
        ]
        err = 0.0
        for g, ref in singles:
            err = max(err, float(np.max(np.abs(prox_of_sum(y, [g]) - ref))))
        n["single_err"] = f"{err:.1e}"
        assert err <= 1e-8
        np.testing.assert_array_equal(prox_of_sum(y, []), y)

        err = 0.0
        for mus in ((0.3, 0.3), (0.2, 0.7), (0.1, 0.2, 0.4)):
            out = prox_of_sum(y, [l1(m) for m in mus])
            err = max(err, float(np.max(np.abs(out - prox_l1(y, 1.0, sum(mus))))))
        assert prox_of_sum(np.array([3.0]), [l1(), l1()])[0] == pytest.approx(1.0, abs=1e-8)
        c = rng.normal(size=5)
        np.testing.assert_allclose(prox_of_sum(np.zeros(5), [indicator_point(c)] * 2), c,
                                   atol=1e-8)
        n["combined_l1_err"] = f"{err:.1e}"
        assert err <= 1e-8
