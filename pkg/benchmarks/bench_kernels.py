"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from vcdet import kernels


def tn_case(rng, n, density):
    values = rng.uniform(0, 1, (n, n))
    values[np.arange(n), np.arange(n)] = 0.9  # a long diagonal
    mask = (values >= 1 - density).astype(np.uint8)
    return values, mask


def topk_case(rng, frames, videos):
    sizes = rng.integers(20, 60, videos)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    block = rng.standard_normal((frames, offsets[-1])).astype(np.float32)
    return block, offsets


def bench(fn, repeat):
    fn()  # warm-up
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.native is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    rng = np.random.default_rng(0)
    rows = []
    for n, density in [(60, 0.3), (200, 0.3), (400, 0.1)]:
        values, mask = tn_case(rng, n, density)
        for step in (3, 5):
            py = bench(lambda: kernels.python.tn_best_path(values, mask, step), args.repeat)
            cy = bench(lambda: kernels.native.tn_best_path(values, mask, step), args.repeat)
            same = (kernels.python.tn_best_path(values, mask, step)[1]
                    == kernels.native.tn_best_path(values, mask, step)[1])
            rows.append((f"tn_best_path {n}x{n} density={density} max_step={step}", py, cy, same))
    for frames, videos, k in [(40, 200, 5), (120, 1000, 5), (120, 1000, 20)]:
        block, offsets = topk_case(rng, frames, videos)
        py = bench(lambda: kernels.python.segment_topk_sum(block, offsets, k), args.repeat)
        cy = bench(lambda: kernels.native.segment_topk_sum(block, offsets, k), args.repeat)
        same = np.allclose(kernels.python.segment_topk_sum(block, offsets, k),
                           kernels.native.segment_topk_sum(block, offsets, k), atol=1e-4)
        rows.append((f"segment_topk_sum {frames}x{offsets[-1]} videos={videos} k={k}", py, cy, same))
    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'python ms':>10}  {'cython ms':>10}  {'speed-up':>8}  agree")
    for name, py, cy, same in rows:
        print(f"{name:<{width}}  {py * 1e3:>10.2f}  {cy * 1e3:>10.2f}  {py / cy:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
