"""Latency measurement of the per-frame relevance stage, and a kernel backend comparison."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .errors import ValidationError
from .gbm import GBMConfig, GBMModel, fit_arrays
from .geometry import Frame
from .relevance import DEFAULT_THRESHOLD, DEFAULT_WINDOW, RelevanceEngine

DEFAULT_BUDGET_MS = 2.0
DEFAULT_WARMUP = 100


@dataclass
class BenchReport:
    frames: int
    warmup: int
    p50_us: float
    p95_us: float
    p99_us: float
    max_us: float
    mean_us: float
    budget_ms: float
    passed: bool
    backend: str

    def to_json(self):
        out = asdict(self)
        out["schema_version"] = 1
        out["pass"] = out.pop("passed")
        return out

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{self.frames} frames ({self.backend}): p50={self.p50_us:.1f}us p95={self.p95_us:.1f}us "
            f"p99={self.p99_us:.1f}us max={self.max_us:.1f}us budget={self.budget_ms}ms -> {verdict}"
        )


def bench_relevance(
    frames: Sequence[Frame],
    model: GBMModel,
    budget_ms: float = DEFAULT_BUDGET_MS,
    warmup: int = DEFAULT_WARMUP,
    window: int = DEFAULT_WINDOW,
    threshold: float = DEFAULT_THRESHOLD,
) -> BenchReport:
    """Time ``assign_relevance`` per frame; the first ``warmup`` frames are not recorded."""
    if len(frames) <= warmup:
        raise ValidationError(f"stream has {len(frames)} frames; need more than the {warmup}-frame warm-up")
    engine = RelevanceEngine(model, window, threshold)
    clock = time.perf_counter_ns
    times = np.empty(len(frames) - warmup)
    for i, fr in enumerate(frames):
        t0 = clock()
        engine.process(fr)
        dt = clock() - t0
        if i >= warmup:
            times[i - warmup] = dt / 1000.0
    p50, p95, p99 = np.percentile(times, [50, 95, 99])
    return BenchReport(
        frames=len(times),
        warmup=warmup,
        p50_us=float(p50),
        p95_us=float(p95),
        p99_us=float(p99),
        max_us=float(times.max()),
        mean_us=float(times.mean()),
        budget_ms=budget_ms,
        passed=bool(p99 <= budget_ms * 1000.0),
        backend=kernels.BACKEND,
    )


def synthetic_model(seed: int = 7, rows: int = 2000, cfg: Optional[GBMConfig] = None) -> GBMModel:
    from .synthetic import arrow_dataset

    X, y = arrow_dataset(rows, seed=seed)
    return fit_arrays(X, y, cfg or GBMConfig(seed=seed))


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def compare_backends(seed: int = 7, repeat: int = 3) -> List[dict]:
    """Wall time of each kernel workload under every available backend (best of ``repeat``)."""
    from .synthetic import arrow_dataset

    rng = np.random.default_rng(seed)
    X, y = arrow_dataset(2000, seed=seed)
    fit_cfg = GBMConfig(stages=50, seed=seed)
    model = fit_arrays(X, y, GBMConfig(seed=seed))
    X20 = X[:20]
    boxes_a = np.column_stack([rng.uniform(0, 500, 300), rng.uniform(0, 500, 300),
                               rng.uniform(5, 40, 300), rng.uniform(5, 40, 300)])
    boxes_b = boxes_a[rng.permutation(300)[:200]] + rng.normal(0, 3, (200, 4)) * [1, 1, 0, 0]

    rows = []
    for name in kernels.available_backends():
        k = kernels.get_backend(name)
        workloads = {
            "fit 2000x11, 50 stages depth 3": (lambda: fit_arrays(X, y, fit_cfg, backend=name), 1),
            "predict 20 rows x 300 trees": (lambda: model.decision_function(X20, backend=name), 200),
            "predict 2000 rows x 300 trees": (lambda: model.decision_function(X, backend=name), 5),
            "iou 300x200 + greedy match": (lambda: k.greedy_match(k.iou_matrix(boxes_a, boxes_b), 0.5), 20),
        }
        for label, (fn, inner) in workloads.items():
            t = _best_of(lambda: [fn() for _ in range(inner)], repeat) / inner
            rows.append({"backend": name, "workload": label, "seconds": t})
    return rows


def format_comparison(rows: List[dict]) -> str:
    workloads = list(dict.fromkeys(r["workload"] for r in rows))
    backends = list(dict.fromkeys(r["backend"] for r in rows))
    table = {(r["backend"], r["workload"]): r["seconds"] for r in rows}
    head = f"{'workload':<34}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        head += f"{'speedup':>10}"
    lines = [head]
    for w in workloads:
        line = f"{w:<34}" + "".join(f"{table[(b, w)] * 1e3:>12.3f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{table[(backends[1], w)] / table[(backends[0], w)]:>9.1f}x"
        lines.append(line)
    return "\n".join(lines)
