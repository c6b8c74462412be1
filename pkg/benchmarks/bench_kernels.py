"""Time each hot kernel on its compiled and numpy paths.

    python benchmarks/bench_kernels.py [--repeat 5]

The compiled path is warmed up once before timing so JIT compilation is excluded.
"""
import argparse
import timeit

import numpy as np

from hierfolio import _kernels


def cases(rng):
    X = rng.normal(size=(30, 3))
    c0 = X[:2].copy()
    B = rng.dirichlet(np.ones(10), 10_000)
    rel = np.exp2(rng.normal(0, 0.02, (5, 10)))
    hist = np.exp2(rng.normal(0, 0.02, (500, 10)))
    normals = rng.standard_normal((100_000, 3))
    m = 10
    in1 = np.arange(m) < 5
    w_prev = rng.dirichlet(np.ones(m + 1))[:m]
    w_new = rng.dirichlet(np.ones(m + 1))[:m]
    intra = np.zeros(m)
    intra[in1] = w_prev[in1] / w_prev[in1].sum()
    intra[~in1] = w_prev[~in1] / w_prev[~in1].sum()
    return {
        "lloyd (30 x 3, k=2)": (_kernels.lloyd, (X, c0, 100)),
        "log_wealth (10 000 portfolios)": (_kernels.log_wealth, (B, rel)),
        "corn_match (500 x 10, w=5)": (_kernels.corn_match, (hist, 5, 0.1)),
        "log_optimal (500 x 10)": (_kernels.log_optimal, (hist, 50)),
        "ou_trace (100 000 x 3)": (_kernels.ou_trace, (np.zeros(3), 0.15, 0.2, normals)),
        "feasible_scale (m=10, cs=0.5)": (_kernels.feasible_scale,
                                          (1.0, 0.0, 0.0, w_prev, w_new, intra, in1, w_prev[in1].sum(),
                                           w_prev[~in1].sum(), 0.5, 60)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, (fn, a) in cases(rng).items():
        fn.jit(*a)  # compile
        times = {}
        for path in ("jit", "numpy"):
            impl = getattr(fn, path)
            n = max(1, int(0.2 / max(timeit.timeit(lambda: impl(*a), number=1), 1e-6)))
            times[path] = min(timeit.repeat(lambda: impl(*a), number=n, repeat=args.repeat)) / n * 1e3
        print(f"{name:34s} {times['jit']:10.3f} {times['numpy']:10.3f} {times['numpy'] / times['jit']:7.1f}x")


if __name__ == "__main__":
    main()
