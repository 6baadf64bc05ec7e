"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on identical inputs under both backends; the table lists
the best wall time per call and the speed-up of the compiled version.
"""
import argparse
import time

import numpy as np

from gsn import _pykernels as py
from gsn.imagegraph import ImageBuffer, rgb_to_lab, slic_superpixels
from gsn import imagegraph, kernels

try:
    from gsn import _ckernels as cy
except ImportError:
    cy = None


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    a = rng.normal(size=(30, 30))
    sym = a + a.T
    img = rng.random((64, 64, 3))
    lab = rgb_to_lab(img)
    step = 8
    ys, xs = np.meshgrid(np.arange(4, 64, step), np.arange(4, 64, step), indexing="ij")
    pos = np.stack([ys.ravel(), xs.ravel()], axis=1)
    centers = np.hstack([lab[pos[:, 0], pos[:, 1]], pos]).astype(np.float64)
    labels = rng.integers(0, 6, size=(128, 128)).astype(np.int64)
    return {
        "jacobi_eigh 30x30": lambda k: k.jacobi_eigh(sym, 1e-10, 100),
        "slic_assign 64x64, K=64": lambda k: k.slic_assign(lab, centers, step, 10.0),
        "label_components 128x128": lambda k: k.label_components(labels),
    }, img


def full_slic(img, module):
    saved = imagegraph.kernels
    imagegraph.kernels = module
    try:
        slic_superpixels(ImageBuffer(img), 64)
    finally:
        imagegraph.kernels = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        print("compiled extension not built; only the Python backend is available")
    rng = np.random.default_rng(0)
    table, img = cases(rng)

    class Backend:
        def __init__(self, mod):
            self.jacobi_eigh, self.slic_assign, self.label_components = (
                mod.jacobi_eigh, mod.slic_assign, mod.label_components)

    rows = [(name, best_time(lambda: fn(py), args.repeat),
             best_time(lambda: fn(cy), args.repeat) if cy else np.nan)
            for name, fn in table.items()]
    rows.append(("slic_superpixels 64x64, K=64",
                 best_time(lambda: full_slic(img, Backend(py)), args.repeat),
                 best_time(lambda: full_slic(img, Backend(cy)), args.repeat) if cy else np.nan))
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<30}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}")
    for name, tp, tc in rows:
        print(f"{name:<30}{tp * 1e3:>12.2f}{tc * 1e3:>12.2f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
