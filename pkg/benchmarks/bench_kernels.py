"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Prints one line
per kernel with the best wall time of each backend and the speed-up, after
checking that both backends return the same numbers.
"""
import argparse
import timeit

import numpy as np

from fpsi._kernels import available_backends
from fpsi.grids import FluidGrid


def cases(rng):
    F = np.eye(2) + 0.1 * rng.standard_normal((4096, 2, 2))
    H = 0.1 * rng.standard_normal((4096, 8))
    g = FluidGrid(65, 65, 0, 0, 2, 2)
    X = g.nodes + 0.01 * np.sin(np.pi * g.nodes[:, ::-1])
    targets = g.nodes[(g.nodes.min(axis=1) > 0.1) & (g.nodes.max(axis=1) < 1.9)]
    return {
        "elastic_density (4096 cells)": lambda k: k.elastic_density(F, 1.0, 1.0, 9.0, False)[2],
        "elastic_density + hessian": lambda k: k.elastic_density(F, 1.0, 1.0, 9.0, True)[4],
        "second_gradient_density": lambda k: k.second_gradient_density(H, 4.0, True)[1],
        "invert_bilinear (65x65 map)": lambda k: k.invert_bilinear(X, 0.0, 0.0, g.dx, g.dy, 65, 65,
                                                                   targets, 1e-10, 50)[0],
        "toy_two_scale quadratic (20000 steps)": lambda k: k.toy_two_scale(0, np.array([1.0, 0.0]), np.zeros(2),
                                                                           1e-4, 1e-2, 20000)[0],
        "toy_two_scale double-well (20000 steps)": lambda k: k.toy_two_scale(
            1, np.array([0.36, 1.48]), np.array([1.35, -0.12]), 6.25e-4, 0.025, 20000)[0],
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    backs = available_backends()
    if "cython" not in backs:
        print("compiled backend not built; only the fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'python [s]':>11s} {'cython [s]':>11s} {'speed-up':>9s} {'max diff':>9s}")
    for name, fn in cases(rng).items():
        times, outs = {}, {}
        for bname, k in backs.items():
            outs[bname] = fn(k)
            times[bname] = min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
        py = times["python"]
        cy = times.get("cython", float("nan"))
        diff = float(np.abs(outs["python"] - outs["cython"]).max()) if "cython" in outs else float("nan")
        print(f"{name:42s} {py:11.4f} {cy:11.4f} {py / cy:9.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
