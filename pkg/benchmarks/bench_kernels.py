"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--points 65536] [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel and backend and the
speedup of the compiled backend.
"""

import argparse
import timeit

import numpy as np

from geomflow import _kernels_py

try:
    from geomflow import _kernels
except ImportError:  # extension not built
    _kernels = None


def _inputs(n, d=2, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(3, n))
    y /= np.linalg.norm(y, axis=0)
    a, b, c = (np.ascontiguousarray(rng.normal(size=(3, n))) for _ in range(3))
    ga, gb = (np.ascontiguousarray(rng.normal(size=(3, d, n))) for _ in range(2))
    vals = rng.normal(size=n)
    order = np.ascontiguousarray(np.argsort(rng.random((16, n)), axis=1).astype(np.int64))
    cuts = np.ascontiguousarray(np.sort(rng.integers(0, n, size=(16, 8)), axis=1).astype(np.int64))
    return {
        "sphere_sff": (y, a, b),
        "sphere_sff_contract": (y, ga, gb),
        "sphere_sff_deriv": (y, c, a, b),
        "normalize": (y * 1.001,),
        "ball_sums": (vals, order, cuts),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--points", type=int, default=65536)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    inputs = _inputs(args.points)
    print(f"{'kernel':<22s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, call_args in inputs.items():
        row = []
        for mod in (_kernels_py, _kernels):
            if mod is None:
                row.append(float("nan"))
                continue
            fn = getattr(mod, name)
            row.append(1e3 * min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat)))
        print(f"{name:<22s} {row[0]:12.3f} {row[1]:12.3f} {row[0] / row[1]:8.2f}")


if __name__ == "__main__":
    main()
