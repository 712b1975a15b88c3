"""Time the compiled and pure-numpy kernel backends on DAR training steps.

Usage::

    python3 benchmarks/bench_kernels.py [--rows 64] [--length 500] [--repeats 5]

Prints one line per backend with the median wall time of a forward pass,
a full training step, and the speed-up of each backend relative to numpy.
"""
import argparse
import statistics
import time

import numpy as np

from dartk import autodiff as ad
from dartk import dar
from dartk.autodiff import kernels


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench(backend, rows, length, repeats, seed=0):
    kernels.use(backend)
    cfg = dar.DarConfig()
    params = dar.build(cfg, seed)
    opt = ad.Adam(params.trainable(), lr=1e-3)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (rows, length)).astype(np.float32)
    y = (0.5 * x).astype(np.float32)
    dar.train_step(params, cfg, opt, x, y)  # warm-up
    fwd = _median_time(lambda: dar.predict(params, cfg, x), repeats)
    step = _median_time(lambda: dar.train_step(params, cfg, opt, x, y), repeats)
    return fwd, step


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=64)
    ap.add_argument("--length", type=int, default=500)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    results = {}
    for backend in kernels.available():
        results[backend] = bench(backend, args.rows, args.length, args.repeats)
    base = results["numpy"]
    print(f"{'backend':8s} {'forward_s':>10s} {'step_s':>10s} {'fwd_speedup':>12s} {'step_speedup':>13s}")
    for name, (fwd, step) in results.items():
        print(f"{name:8s} {fwd:10.4f} {step:10.4f} {base[0] / fwd:12.2f} {base[1] / step:13.2f}")
    if "cython" not in results:
        print("compiled backend unavailable; only numpy was timed")


if __name__ == "__main__":
    main()
