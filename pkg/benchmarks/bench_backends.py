"""Compare the Cython kernels with the pure-Python fallback.

Usage: python benchmarks/bench_backends.py [--repeat N] [--frames N]

Prints wall time per kernel workload for each available backend, then the
per-frame relevance latency (20 arrows + 20 lights) under each backend.
"""
import argparse

from tlrelevance import kernels
from tlrelevance.bench import bench_relevance, compare_backends, format_comparison, synthetic_model
from tlrelevance.synthetic import bench_stream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--frames", type=int, default=1100)
    args = ap.parse_args()

    print(f"backends: {', '.join(kernels.available_backends())}\n")
    print(format_comparison(compare_backends(repeat=args.repeat)))

    print("\nrelevance latency per frame (20 arrows + 20 lights)")
    model = synthetic_model()
    frames = bench_stream(args.frames, 20, 20)
    default = kernels.BACKEND
    try:
        for name in kernels.available_backends():
            kernels.set_backend(name)
            print("  " + bench_relevance(frames, model).summary())
    finally:
        kernels.set_backend(default)


if __name__ == "__main__":
    main()
