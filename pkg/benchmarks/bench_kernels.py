"""Timing comparison of the compiled blend kernels against the pure-numpy
fallback. Run directly:

    python3 benchmarks/bench_kernels.py [--size 512] [--repeats 200]
"""
import argparse
import time

import numpy as np

from advcf import _blendpure
from advcf.eot import TransformInstance
from advcf.kernels import BACKEND


def _compiled():
    from advcf import _blendcore

    return _blendcore


def time_fn(fn, repeats: int) -> float:
    # best-of to suppress scheduler noise
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=512, help="square image side")
    parser.add_argument("--repeats", type=int, default=200, help="timing repeats")
    args = parser.parse_args()

    if BACKEND != "compiled":
        print("compiled backend unavailable; nothing to compare against")
        return 1
    core = _compiled()

    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(args.size, args.size, 3), dtype=np.uint8)
    color = (151, 25, 93)
    tf = TransformInstance(
        brightness=1.2, offset=(3, -2), color_scale=(1.05, 0.95, 1.02)
    )

    cases = {
        "blend_uniform": (
            lambda: core.blend_uniform(img, color, 0.4),
            lambda: _blendpure.blend_uniform(img, color, 0.4),
        ),
        "shift_blend_scale": (
            lambda: core.shift_blend_scale(
                img, color, 0.4, tf.offset[0], tf.offset[1], tf.brightness
            ),
            lambda: _blendpure.shift_blend_scale(
                img, color, 0.4, tf.offset[0], tf.offset[1], tf.brightness
            ),
        ),
    }

    print(f"image {args.size}x{args.size}x3, best of {args.repeats} runs")
    print(f"{'kernel':<20} {'compiled':>12} {'pure':>12} {'speedup':>9}")
    for name, (fast, slow) in cases.items():
        out_fast, out_slow = fast(), slow()
        if not np.array_equal(out_fast, out_slow):
            print(f"{name:<20} OUTPUT MISMATCH")
            return 1
        t_fast = time_fn(fast, args.repeats)
        t_slow = time_fn(slow, args.repeats)
        print(
            f"{name:<20} {t_fast * 1e3:>10.3f}ms {t_slow * 1e3:>10.3f}ms"
            f" {t_slow / t_fast:>8.1f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
