"""Command-line harness: solve one restoration problem, benchmark several
solvers on it, or compute the prox of a sum of regularizers on an image."""

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import baselines
from .errors import ConfigError, NumericalError
from .functions import indicator_box, indicator_nonneg, l1
from .gfb import SolverConfig, gfb_solve, prox_of_sum
from .pgm import read_pgm, write_pgm
from .problems import ALGORITHMS, RestorationSpec, build_restoration, snr

EPS = np.finfo(float).eps


def fmt(v):
    return f"{v:.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(r if isinstance(r, str) else fmt(r) for r in row) + "\n")


def run_algorithm(restoration, algo, iters, gamma=None, lam=None, workers=1):
    """Run ``algo`` for ``iters`` iterations with the default parameters.

    ``gamma`` and ``lam`` override the step size and relaxation; for ``chpo``
    they set ``tau`` and ``theta``.
    """
    if algo not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    forms = restoration.forms
    if algo == "fb" and "fb" not in forms:
        n = forms["gfb"].n
        raise ConfigError(f"forward-backward cannot deal with more than n = 1 non-smooth "
                          f"function; this problem has n = {n} (use --algo gfb)")
    problem = forms[algo]
    if algo == "gfb":
        cfg = SolverConfig(max_iter=iters, stop_tol=0.0, workers=workers,
                           gamma=gamma, lam=1.0 if lam is None else lam)
        return gfb_solve(problem, cfg)
    if algo == "fb":
        return baselines.fb_solve(problem, gamma=gamma, lam=1.0 if lam is None else lam,
                                  max_iter=iters)
    if algo == "dr":
        return baselines.dr_solve(problem, gamma=gamma, lam=1.0 if lam is None else lam,
                                  max_iter=iters)
    if algo == "chpo":
        return baselines.chpo_solve(problem, tau=gamma, theta=1.0 if lam is None else lam,
                                    max_iter=iters)
    if algo == "hpe":
        if gamma is not None or lam is not None:
            raise ConfigError("hpe derives its step from varsigma; --gamma/--lambda do not apply")
        return baselines.hpe_solve(problem, max_iter=iters)
    if lam is not None:
        raise ConfigError("cope has no relaxation parameter")
    return baselines.cope_solve(problem, gamma=gamma, max_iter=iters)


def _load(config, seed):
    spec = RestorationSpec.from_file(config)
    if seed is not None:
        spec = replace(spec, seed=seed)
    return build_restoration(spec)


def _write_log(path, log, timing=True):
    rows = ((k, obj, res, t if timing else 0.0) for k, obj, res, t in log.rows())
    write_csv(path, ["iter", "objective", "residual", "time_ms"], rows)


def cmd_solve(args):
    restoration = _load(args.config, args.seed)
    os.makedirs(args.out, exist_ok=True)
    tic = time.perf_counter()
    x, log = run_algorithm(restoration, args.algo, args.iters, args.gamma, args.lam, args.workers)
    wall = (time.perf_counter() - tic) * 1e3
    _write_log(os.path.join(args.out, "log.csv"), log, timing=args.timing)
    image = restoration.image(x)
    write_pgm(os.path.join(args.out, "restored.pgm"), image)
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(f"algorithm = {args.algo}\n")
        fh.write(f"iterations = {len(log)}\n")
        fh.write(f"objective = {fmt(log.objective[-1])}\n")
        fh.write(f"snr_observed_db = {fmt(snr(restoration.y0, restoration.y))}\n")
        fh.write(f"snr_restored_db = {fmt(snr(restoration.y0, image))}\n")
        fh.write(f"solver_time_ms = {fmt(log.time_ms[-1])}\n")
        fh.write(f"wall_time_ms = {fmt(wall)}\n")
    print(f"{args.algo}: {len(log)} iterations, objective {log.objective[-1]:.6g}, "
          f"SNR {snr(restoration.y0, image):.2f} dB")
    return 0


def decay(objective, psi_min):
    """``log10(Psi_t - Psi_min)`` with the gap clamped at machine epsilon."""
    gap = np.maximum(np.asarray(objective, dtype=float) - psi_min, EPS)
    return np.log10(gap)


def cmd_bench(args):
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    if len(algos) < 2:
        raise ConfigError("bench needs at least two algorithms")
    if len(set(algos)) != len(algos):
        raise ConfigError("duplicate algorithm in --algos")
    restoration = _load(args.config, args.seed)

    def one(algo):
        return algo, run_algorithm(restoration, algo, args.iters)

    if args.concurrent:
        with ThreadPoolExecutor(max_workers=len(algos)) as pool:
            results = dict(pool.map(one, algos))
    else:
        results = dict(one(a) for a in algos)

    parallel = {}
    if args.parallel_timing:
        workers = os.cpu_count() or 1
        for algo in algos:
            if algo == "gfb":
                _, log = run_algorithm(restoration, algo, args.iters, workers=workers)
                parallel[algo] = log.time_ms[-1]

    psi_min = min(min(log.objective) for _, log in results.values())
    os.makedirs(args.out, exist_ok=True)
    for algo in algos:
        x, log = results[algo]
        sub = os.path.join(args.out, algo)
        os.makedirs(sub, exist_ok=True)
        write_csv(os.path.join(sub, "decay.csv"), ["iter", "log10_gap"],
                  zip(range(1, len(log) + 1), decay(log.objective, psi_min)))
        _write_log(os.path.join(sub, "log.csv"), log)
        write_pgm(os.path.join(sub, "restored.pgm"), restoration.image(x))
    write_csv(os.path.join(args.out, "times.csv"),
              ["algo", "iterations", "time_ms", "parallel_time_ms", "reliable"],
              [(a, str(len(results[a][1])), results[a][1].time_ms[-1],
                fmt(parallel[a]) if a in parallel else "",
                "0" if args.concurrent else "1") for a in algos])
    winner = min(algos, key=lambda a: min(results[a][1].objective))
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(f"psi_min = {fmt(psi_min)}\n")
        fh.write(f"psi_min_reached_by = {winner}\n")
        for a in algos:
            x, log = results[a]
            fh.write(f"{a}.final_objective = {fmt(log.objective[-1])}\n")
            fh.write(f"{a}.snr_db = {fmt(snr(restoration.y0, restoration.image(x)))}\n")
    print(f"psi_min = {psi_min:.10g} (reached by {winner})")
    return 0


_REGULARIZERS = {
    "l1": lambda *p: l1(float(p[0]) if p else 1.0),
    "box": lambda *p: indicator_box(float(p[0]) if p else 0.0, float(p[1]) if len(p) > 1 else 1.0),
    "nonneg": lambda *p: indicator_nonneg(),
}


def parse_regularizers(text):
    """Parse ``name[:param[:param]]`` items separated by commas."""
    out = []
    for item in filter(None, (s.strip() for s in (text or "").split(","))):
        name, *params = item.split(":")
        if name not in _REGULARIZERS:
            raise ConfigError(f"unknown regularizer {name!r}; choose from {sorted(_REGULARIZERS)}")
        try:
            out.append(_REGULARIZERS[name](*params))
        except ValueError as exc:
            raise ConfigError(f"bad parameter in {item!r}") from exc
    return out


def _read_image(path):
    return np.load(path) if path.endswith(".npy") else read_pgm(path)


def _write_image(path, image):
    if path.endswith(".npy"):
        np.save(path, image)
    else:
        write_pgm(path, image)


def cmd_proxsum(args):
    y = _read_image(args.input)
    regs = parse_regularizers(args.reg)
    out = prox_of_sum(y, regs, SolverConfig(max_iter=args.iters, stop_tol=1e-13))
    _write_image(args.out, out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="gfbsplit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one solver on a restoration problem")
    s.add_argument("--config", required=True)
    s.add_argument("--algo", default="gfb")
    s.add_argument("--iters", type=int, default=1000)
    s.add_argument("--out", required=True)
    s.add_argument("--gamma", type=float)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--no-timing", dest="timing", action="store_false",
                   help="write 0 in the time_ms column so log.csv is byte-reproducible")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="compare solvers on one restoration problem")
    b.add_argument("--config", required=True)
    b.add_argument("--algos", default="gfb,dr,chpo,hpe,cope")
    b.add_argument("--iters", type=int, default=1000)
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int)
    b.add_argument("--concurrent", action="store_true",
                   help="run solvers in parallel threads (timings marked unreliable)")
    b.add_argument("--parallel-timing", action="store_true",
                   help="also time gfb with parallel prox evaluations")
    b.set_defaults(func=cmd_bench)

    x = sub.add_parser("proxsum", help="prox of a sum of regularizers applied to an image")
    x.add_argument("--in", dest="input", required=True)
    x.add_argument("--reg", default="", help="e.g. 'l1:0.1,box:0:1'")
    x.add_argument("--out", required=True)
    x.add_argument("--iters", type=int, default=20000)
    x.set_defaults(func=cmd_proxsum)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        # ConfigError, DimensionError and malformed image files
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
