"""Compiled versus numpy kernels.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from ddident import _fallback

try:
    from ddident import _kernels
except ImportError:
    _kernels = None


def _cases(rng):
    pts = rng.integers(0, 60, size=(3600, 2)).astype(float)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    xs, ys = np.ascontiguousarray(pts[order, 0]), np.ascontiguousarray(pts[order, 1])
    starts = np.arange(-20.0, 60.0, 20.0 / 64)
    t = np.linspace(-10, 20, 20001)
    K = 8
    amps = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    delays, dopplers = rng.uniform(0, 4, K), rng.uniform(-3, 3, K)
    return {
        "window_counts r=20": lambda m: m.window_counts(xs, ys, starts, starts, 20.0, False),
        "gaussian_response K=8": lambda m: m.gaussian_response(t, amps, delays, dopplers, 1.0, 8.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    cases = _cases(np.random.default_rng(0))
    mods = [("python", _fallback)] + ([("compiled", _kernels)] if _kernels else [])
    print(f"{'kernel':<24}" + "".join(f"{name:>12}" for name, _ in mods) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = [min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) for _, m in mods]
        speed = f"{times[0] / times[1]:9.1f}x" if len(times) == 2 else "       n/a"
        print(f"{label:<24}" + "".join(f"{1e3 * s:10.2f}ms" for s in times) + speed)


if __name__ == "__main__":
    main()
