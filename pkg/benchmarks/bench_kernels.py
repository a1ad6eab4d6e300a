"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from absamamba.kernels import ccore, fallback


def cases(rng):
    nb, L, D, N = 16, 64, 200, 16
    dA = rng.uniform(0.5, 1.0, size=(nb, L, D, N))
    dBx = rng.normal(size=(nb, L, D, N))
    C = rng.normal(size=(nb, L, D, N))
    y, hs = fallback.scan_forward(dA, dBx, C)
    gy = rng.normal(size=y.shape)
    knots = np.linspace(-3, 3, 12)
    x = rng.uniform(-3, 3, size=20000)
    return {
        "scan_forward": lambda m: m.scan_forward(dA, dBx, C),
        "scan_backward": lambda m: m.scan_backward(dA, C, hs, gy),
        "bspline_basis": lambda m: m.bspline_basis(x, knots, 3),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    if ccore is None:
        print("compiled extension not built; run `pip install -e .` first")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<15}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, fn in cases(rng).items():
        t_np = min(timeit.repeat(lambda: fn(fallback), number=1, repeat=args.repeat)) * 1e3
        if ccore is None:
            print(f"{name:<15}{t_np:>10.2f}{'-':>11}{'-':>9}")
            continue
        t_c = min(timeit.repeat(lambda: fn(ccore), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<15}{t_np:>10.2f}{t_c:>11.2f}{t_np / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
