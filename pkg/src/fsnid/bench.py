"""Wall-time scaling of selection in the number of features."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .estimation import EstimatorConfig
from .ingest import normalize
from .selection import run_fsnid
from .synthetic import SyntheticSpec, generate

BENCH_CONFIG = EstimatorConfig(batch_size=10, steps=100, tail_window=20)


@dataclass(frozen=True)
class BenchPoint:
    feature_count: int
    seconds: float
    phi_calls: int
    rows: int


@dataclass(frozen=True)
class BenchResult:
    points: tuple[BenchPoint, ...]
    slope: float
    intercept: float
    r_squared: float
    temporal: bool

    def ratio(self, a: int, b: int) -> float:
        """seconds(a) / seconds(b)."""
        by = {p.feature_count: p.seconds for p in self.points}
        return by[a] / by[b]

    def to_dict(self) -> dict:
        return {
            "points": [{"feature_count": p.feature_count, "seconds": p.seconds,
                        "phi_calls": p.phi_calls, "rows": p.rows} for p in self.points],
            "linear_fit": {"slope": self.slope, "intercept": self.intercept,
                           "r_squared": self.r_squared},
            "temporal": self.temporal,
        }

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["feature_count", "seconds", "phi_calls", "rows"])
            for p in self.points:
                w.writerow([p.feature_count, p.seconds, p.phi_calls, p.rows])


def time_selection(n_features: int, cfg: EstimatorConfig, rows: int = 500,
                   seed: int = 0) -> BenchPoint:
    """Time one selection run on iid binary data; generation is not timed."""
    d, _ = generate(SyntheticSpec("bench-binary", rows=rows, seed=seed,
                                  bench_features=n_features))
    d = normalize(d)
    t0 = time.perf_counter()
    report = run_fsnid(d, cfg)
    return BenchPoint(n_features, time.perf_counter() - t0, report.phi_calls, rows)


def run_bench(feature_counts, cfg: EstimatorConfig = BENCH_CONFIG, rows: int = 500,
              seed: int = 0) -> BenchResult:
    """Time selection at each feature count and fit seconds = a + b * count."""
    counts = [int(c) for c in feature_counts]
    if len(counts) < 4:
        raise ValueError("need at least 4 feature counts for a meaningful fit")
    if counts != sorted(set(counts)) or counts[0] < 1:
        raise ValueError("feature counts must be positive and strictly ascending")
    cfg = replace(cfg, jobs=1)
    time_selection(counts[0], cfg, rows, seed)  # warm-up: imports, BLAS init
    points = tuple(time_selection(c, cfg, rows, seed + i) for i, c in enumerate(counts))
    fit = stats.linregress([p.feature_count for p in points], [p.seconds for p in points])
    return BenchResult(points, float(fit.slope), float(fit.intercept),
                       float(fit.rvalue ** 2), cfg.temporal)


def fit_is_linear(result: BenchResult, min_r2: float = 0.95) -> bool:
    return bool(result.r_squared >= min_r2 and np.isfinite(result.slope))
