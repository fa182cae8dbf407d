"""Compare the numba and numpy kernel backends.

Each kernel is timed on realistic sizes with both implementations, and the
outputs are checked against each other.  A full split step of the
integrator is then timed in two subprocesses, one with
RANDWAVE_DISABLE_NUMBA=1.

    python3 benchmarks/bench_kernels.py [--n-max 8] [--repeat 20]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from randwave import _kernels as kern
from randwave.spectral import Lattice, dealias_grid


def _inputs(n_max, rng):
    lat = Lattice.ball(n_max)
    m = len(lat)
    n = dealias_grid(n_max)
    grid = rng.standard_normal((n, n, n))
    q = rng.standard_normal(1 + 2 * m)
    p = rng.standard_normal(1 + 2 * m)
    om = lat.omega
    cos_w, sin_w = np.cos(om * 0.01), np.sin(om * 0.01)
    sin_over_w = np.where(om > 0, sin_w / np.where(om > 0, om, 1.0), 0.01)
    return lat, grid, q, p, (cos_w, sin_over_w, om * sin_w)


def kernel_table(n_max, repeat):
    if not kern.numba_kernels:
        print("numba unavailable; only the numpy backend can be timed")
        return []
    rng = np.random.default_rng(0)
    lat, grid, q, p, prop = _inputs(n_max, rng)
    m = len(lat)
    idx, mirror, conj = lat.fft_map(grid.shape[0])
    n = grid.shape[0]
    spec_size = n * n * (n // 2 + 1)
    cases = {
        "rotate": lambda K: K["rotate"](q.copy(), p.copy(), *prop),
        "cube": lambda K: K["cube"](grid, np.empty_like(grid)),
        "power_mean(4)": lambda K: K["power_mean"](grid, 4.0),
        "max_abs": lambda K: K["max_abs"](grid),
        "scatter": lambda K: K["scatter"](np.zeros(spec_size, complex), idx, mirror, conj, q, m),
        "forcing_power": lambda K: K["forcing_power"](grid, grid, grid),
        "neumaier_sum(1e6)": lambda K: K["neumaier_sum"](rng_vec),
        "row_stats(17 rows)": lambda K: K["row_stats"](rows, 6.0),
    }
    rng_vec = rng.standard_normal(10 ** 6)
    rows = rng.standard_normal((17, n * n * n))
    out = []
    for name, fn in cases.items():
        fn(kern.numba_kernels)  # compile
        t_nb = min(timeit.repeat(lambda: fn(kern.numba_kernels), number=1, repeat=repeat))
        t_np = min(timeit.repeat(lambda: fn(kern.numpy_kernels), number=1, repeat=repeat))
        out.append((name, t_np, t_nb))
    return out


def agreement(n_max):
    """Max relative difference of the two backends on each reducing kernel."""
    rng = np.random.default_rng(1)
    _, grid, *_ = _inputs(n_max, rng)
    res = {}
    for name, args in (("power_mean", (grid, 4.0)), ("max_abs", (grid,)),
                       ("forcing_power", (grid, grid * 0.5, grid * 0.25))):
        a = kern.numba_kernels[name](*args)
        b = kern.numpy_kernels[name](*args)
        res[name] = abs(a - b) / max(abs(b), 1e-300)
    return res


_STEP = """
import json, time
from randwave import _kernels
from randwave.evolve import evolve_full
from randwave.harness import make_base
V = make_base("power_decay", n_max={n_max}, sigma=3.0, s=0.5)
evolve_full(V, 0.02, 0.01, guard=False)
t = time.perf_counter()
evolve_full(V, {steps} * 0.01, 0.01, guard=False)
print(json.dumps({{"backend": _kernels.backend(), "per_step": (time.perf_counter() - t) / {steps}}}))
"""


def step_timing(n_max, steps):
    res = []
    for disable in ("0", "1"):
        env = dict(os.environ, RANDWAVE_DISABLE_NUMBA=disable)
        txt = subprocess.run([sys.executable, "-c", _STEP.format(n_max=n_max, steps=steps)],
                             env=env, capture_output=True, text=True, check=True).stdout
        res.append(json.loads(txt.strip().splitlines()[-1]))
    return res


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n-max", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--steps", type=int, default=200)
    args = ap.parse_args()
    print(f"grid {dealias_grid(args.n_max)}^3, modes {len(Lattice.ball(args.n_max))}")
    print(f"{'kernel':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, t_np, t_nb in kernel_table(args.n_max, args.repeat):
        print(f"{name:<20}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.2f}")
    if kern.numba_kernels:
        for name, err in agreement(args.n_max).items():
            print(f"agreement {name}: relative difference {err:.2e}")
    for r in step_timing(args.n_max, args.steps):
        print(f"full split step, {r['backend']:>5} backend: {1e3 * r['per_step']:.3f} ms")


if __name__ == "__main__":
    main()
