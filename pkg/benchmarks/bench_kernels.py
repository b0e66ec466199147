"""Time the compiled region-growing kernel against its pure-Python twin.

    python benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 3]

Both kernels run on the same noisy wrapped ramp; the script checks their
outputs are identical before reporting timings.
"""
import argparse
import time

import numpy as np

from lowsnr import _backend
from lowsnr.core import wrap


def scene(n, seed=0):
    rng = np.random.default_rng(seed)
    r, c = np.mgrid[0:n, 0:n]
    coh = np.clip(rng.beta(4, 2, (n, n)), 0, 1)
    phase = wrap(0.3 * r + 0.2 * c + rng.normal(0, 1, (n, n)) * (1 - coh))
    return phase, coh


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threshold", type=float, default=0.3)
    args = ap.parse_args(argv)

    py = _backend.get_kernels("python")
    try:
        cy = _backend.get_kernels("cython")
    except ImportError:
        cy = None
        print("compiled kernel not built; timing the Python kernel only")

    print(f"{'size':>6} {'python s':>10} {'cython s':>10} {'speed-up':>9}")
    for n in args.sizes:
        phase, coh = scene(n)
        t_py, out_py = best_of(lambda: py.grow_region(phase, coh, args.threshold), args.repeat)
        if cy is None:
            print(f"{n:>6} {t_py:>10.4f} {'-':>10} {'-':>9}")
            continue
        t_cy, out_cy = best_of(lambda: cy.grow_region(phase, coh, args.threshold), args.repeat)
        for a, b in zip(out_py, out_cy):
            if not np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True):
                raise SystemExit(f"kernels disagree at size {n}")
        print(f"{n:>6} {t_py:>10.4f} {t_cy:>10.4f} {t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
