"""Time the compiled and pure-Python warp kernels on the same workload.

    python3 benchmarks/bench_warp.py --sizes 64 128 --batch 8 --repeat 5
"""

import argparse
import time

import numpy as np
import torch

from semicurv import _backend
from semicurv.geometry import AffineTransform, image_center, warp


def workload(batch, size, seed=0):
    rng = np.random.default_rng(seed)
    x = torch.from_numpy(rng.random((batch, 1, size, size))).requires_grad_(True)
    cx, cy = image_center(size, size)
    ts = [
        (AffineTransform.rotate(a) @ AffineTransform.scale(s)).about(cx, cy)
        for a, s in zip(rng.uniform(-180, 180, batch), rng.uniform(0.8, 1.2, batch))
    ]
    return x, ts


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    parser.add_argument("--batch", type=int, default=8)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    backends = ["python"]
    try:
        _backend.get_kernels("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled extension not built; timing the fallback only")

    print(f"default backend: {_backend.BACKEND}")
    print(f"{'size':>6} {'backend':>8} {'forward ms':>11} {'fwd+bwd ms':>11}")
    for size in args.sizes:
        x, ts = workload(args.batch, size)
        results = {}
        for name in backends:
            fwd = best_time(lambda: warp(x.detach(), ts, backend=name), args.repeat)

            def both():
                x.grad = None
                warp(x, ts, backend=name).sum().backward()

            full = best_time(both, args.repeat)
            results[name] = full
            print(f"{size:>6} {name:>8} {1e3 * fwd:>11.2f} {1e3 * full:>11.2f}")
        if len(results) == 2:
            print(f"{'':>6} speedup x{results['python'] / results['cython']:.1f}")


if __name__ == "__main__":
    main()
