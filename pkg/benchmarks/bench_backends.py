"""Compare the active kernel backend against the pure-numpy fallback.

Times forward and backward passes for each convolution layer shape used by
the extractor (batch 32), plus the pooling stage. Select the backend under
test with EMG_OPEN_BACKEND=numba|numpy before launching.

    python3 benchmarks/bench_backends.py [--batch 32] [--reps 20]
"""

import argparse
import time

import numpy as np

from emgopen import backend
from emgopen import kernels

# (name, in_ch, hw, out_ch, kernel, stride) for the three extractor layers
LAYERS = [
    ("conv1", 1, 80, 8, 5, 2),
    ("conv2", 8, 38, 16, 5, 2),
    ("conv3", 16, 17, 32, 3, 2),
]


def median_ms(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return float(np.median(times)) / 1e6


def bench(batch, reps):
    np_fwd, np_bwd, np_pool_fwd, np_pool_bwd = kernels.numpy_kernels
    rng = np.random.default_rng(0)
    print(f"active backend: {backend.backend_name()}  (batch={batch}, reps={reps})")
    print(f"{'stage':<14}{'active ms':>12}{'numpy ms':>12}{'ratio':>8}")
    total_a = total_n = 0.0
    for name, c, hw, o, k, s in LAYERS:
        x = rng.standard_normal((batch, c, hw, hw))
        w = rng.standard_normal((o, c, k, k))
        b = rng.standard_normal(o)
        y = kernels.conv_forward(x, w, b, s)
        dy = rng.standard_normal(y.shape)
        for stage, active, fallback in (
            (f"{name} fwd", lambda: kernels.conv_forward(x, w, b, s), lambda: np_fwd(x, w, b, s)),
            (f"{name} bwd", lambda: kernels.conv_backward(x, w, s, dy), lambda: np_bwd(x, w, s, dy)),
        ):
            ta = median_ms(active, reps)
            tn = median_ms(fallback, reps)
            total_a += ta
            total_n += tn
            print(f"{stage:<14}{ta:>12.3f}{tn:>12.3f}{tn / ta:>8.2f}")
    x = rng.standard_normal((batch, 32, 8, 8))
    yp, idx = kernels.maxpool_forward(x, 2)
    dyp = rng.standard_normal(yp.shape)
    for stage, active, fallback in (
        ("pool fwd", lambda: kernels.maxpool_forward(x, 2), lambda: np_pool_fwd(x, 2)),
        ("pool bwd", lambda: kernels.maxpool_backward(dyp, idx, 2, 8, 8),
         lambda: np_pool_bwd(dyp, idx, 2, 8, 8)),
    ):
        ta = median_ms(active, reps)
        tn = median_ms(fallback, reps)
        total_a += ta
        total_n += tn
        print(f"{stage:<14}{ta:>12.3f}{tn:>12.3f}{tn / ta:>8.2f}")
    print(f"{'total':<14}{total_a:>12.3f}{total_n:>12.3f}{total_n / total_a:>8.2f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--reps", type=int, default=20)
    args = p.parse_args()
    bench(args.batch, args.reps)
