"""Compare the compiled kernel extension against the numpy fallback.

Times the four shared kernels (im2col, col2im, maxpool2x2 forward and
backward) on workloads shaped like the 32x24 and 160x120 presets, checks
that both backends agree numerically, and prints a speedup table.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--dtype f32|f64]
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from odyn.tensor import backend, kernels_numpy

try:
    from odyn.tensor import _kernels
except ImportError:
    _kernels = None


def _bench(fn, args, repeats):
    """Median seconds per call; one warmup call feeds the cache."""
    fn(*args)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _workloads(dtype, rng):
    # padded conv inputs: batch of 6 scenes, kernel 3, encoder stride 2
    cases = []
    for label, shape, k, s in [
        ("im2col desk enc", (6, 5, 26, 34), 3, 2),
        ("im2col desk core", (6, 16, 14, 18), 3, 1),
        ("im2col paper enc", (6, 5, 122, 162), 3, 2),
    ]:
        xp = np.ascontiguousarray(rng.standard_normal(shape), dtype=dtype)
        cases.append((label, "im2col", (xp, k, k, s, s)))
        b, c, hp, wp = shape
        oh = (hp - k) // s + 1
        ow = (wp - k) // s + 1
        cols = np.ascontiguousarray(
            rng.standard_normal((b, c * k * k, oh * ow)), dtype=dtype
        )
        cases.append(
            (label.replace("im2col", "col2im"), "col2im", (cols, b, c, hp, wp, k, k, s, s))
        )
    for label, shape in [
        ("maxpool desk", (6, 16, 24, 32)),
        ("maxpool paper", (6, 16, 120, 160)),
    ]:
        x = np.ascontiguousarray(rng.standard_normal(shape), dtype=dtype)
        cases.append((label + " fwd", "maxpool2x2_forward", (x,)))
        out, arg = kernels_numpy.maxpool2x2_forward(x)
        cases.append(
            (label + " bwd", "maxpool2x2_backward", (out, arg, shape[2], shape[3]))
        )
    return cases


def _agree(a, b):
    if isinstance(a, tuple):
        return max(_agree(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=30)
    ap.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    args = ap.parse_args(argv)

    if _kernels is None:
        print("compiled extension not importable; nothing to compare", file=sys.stderr)
        return 1

    dtype = np.float32 if args.dtype == "f32" else np.float64
    rng = np.random.default_rng(0)
    print(f"active backend at import: {backend.active_backend()}")
    print(f"dtype {np.dtype(dtype).name}, median of {args.repeats} runs\n")
    header = f"{'case':<22}{'numpy':>12}{'ext':>12}{'speedup':>9}{'max diff':>11}"
    print(header)
    print("-" * len(header))
    for label, op, call_args in _workloads(dtype, rng):
        f_np = getattr(kernels_numpy, op)
        f_ext = getattr(_kernels, op)
        diff = _agree(f_np(*call_args), f_ext(*call_args))
        t_np = _bench(f_np, call_args, args.repeats)
        t_ext = _bench(f_ext, call_args, args.repeats)
        print(
            f"{label:<22}{t_np * 1e6:>10.0f}us{t_ext * 1e6:>10.0f}us"
            f"{t_np / t_ext:>8.2f}x{diff:>11.2e}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
