"""Time the compiled and numpy box kernels against each other.

Usage::

    python benchmarks/bench_kernels.py [--sizes 10 50 200] [--repeat 5]

Prints one row per (kernel, size) with the best per-call time for each
backend and the speedup of the compiled one. Results are checked for
equality before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from cuetrack import kernels


def random_boxes(rng: np.random.Generator, n: int) -> np.ndarray:
    xy = rng.uniform(0, 600, (n, 2))
    wh = rng.uniform(5, 120, (n, 2))
    return np.hstack([xy, xy + wh])


def cases(rng: np.random.Generator, n: int) -> dict:
    a, b = random_boxes(rng, n), random_boxes(rng, n)
    scores = rng.uniform(size=n)
    sim = rng.uniform(size=(n, n))
    return {
        "iou_matrix": lambda: kernels.iou_matrix(a, b),
        "ioc_matrix": lambda: kernels.ioc_matrix(a, b),
        "nms": lambda: kernels.nms(a, scores, 0.5),
        "greedy_assign": lambda: kernels.greedy_assign(sim, 0.35),
    }


def best_time(fn, repeat: int) -> float:
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[10, 50, 200])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; timing the numpy backend only")
    original = kernels.backend_name()
    header = f"{'kernel':<14} {'n':>5}" + "".join(f" {b + ' (us)':>14}" for b in backends)
    print(header + (f" {'speedup':>8}" if len(backends) > 1 else ""))
    try:
        for n in args.sizes:
            fns = cases(np.random.default_rng(args.seed), n)
            for name, fn in fns.items():
                times, outputs = [], []
                for backend in backends:
                    kernels.use_backend(backend)
                    outputs.append(fn())
                    times.append(best_time(fn, args.repeat))
                if not all(np.array_equal(outputs[0], o) for o in outputs[1:]):
                    raise SystemExit(f"{name} (n={n}): backends disagree")
                row = f"{name:<14} {n:>5}" + "".join(f" {t * 1e6:>14.1f}" for t in times)
                if len(times) > 1:
                    row += f" {times[1] / times[0]:>7.1f}x"
                print(row)
    finally:
        kernels.use_backend(original)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
