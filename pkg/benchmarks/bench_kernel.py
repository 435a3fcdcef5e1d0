"""Compiled versus pure-Python flow kernel.

Times three workloads on both backends and checks that their results agree
bit for bit:

* a long free run (rotating trajectory),
* 400 return-map evaluations (one cycle scan grid),
* a pull-in bisection.

Run with ``python benchmarks/bench_kernel.py [--repeat N]``.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from phaselock import kernels
from phaselock.analysis import ReturnMap, default_x_range
from phaselock.integrate import IntegratorConfig, run_flow
from phaselock.model import LeadLag, PhaseModel
from phaselock.pullin import pull_in_estimate

FILTER = LeadLag(0.2922, 63.1656, 63.1656)


def free_run(backend):
    m = PhaseModel(FILTER, 95.0, 89.5)
    return run_flow(m, [0.0, 0.3], 20.0, IntegratorConfig(), backend=backend)[:3]


def return_maps(backend):
    m = PhaseModel(FILTER, 1000.0, 720.0)
    P = ReturnMap(m, backend=backend)
    lo, hi = default_x_range(m)
    return [P(x).x for x in np.linspace(lo, hi, 400)]


def bisection(backend):
    m = PhaseModel(FILTER, 1000.0, 0.0)
    return pull_in_estimate(m, 1.0, backend=backend).omega_lo


def timed(fn, backend, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = fn(backend)
        best = min(best, time.perf_counter() - t0)
    return best, res


def same(a, b):
    """Bitwise equality of nested results."""
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(same(u, v) for u, v in zip(a, b))
    return np.asarray(a, dtype=float).tobytes() == np.asarray(b, dtype=float).tobytes()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not kernels.HAVE_COMPILED:
        print("compiled kernel not built; nothing to compare")
        return 1
    print(f"{'workload':<14}{'compiled (s)':>14}{'python (s)':>14}{'speedup':>10}  identical")
    for name, fn in (("free run", free_run), ("return maps", return_maps), ("bisection", bisection)):
        tc, rc = timed(fn, "compiled", args.repeat)
        tp, rp = timed(fn, "python", 1)
        print(f"{name:<14}{tc:>14.4f}{tp:>14.4f}{tp / tc:>10.1f}  {same(rc, rp)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
