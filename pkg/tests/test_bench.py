import csv

import pytest
from scipy import stats

from fsnid.bench import BENCH_CONFIG, BenchPoint, BenchResult, fit_is_linear, run_bench, \
    time_selection
from fsnid.estimation import EstimatorConfig

FAST = EstimatorConfig(batch_size=10, steps=10, tail_window=5, repeats=2)


def test_reduced_budget():
    assert (BENCH_CONFIG.batch_size, BENCH_CONFIG.steps) == (10, 100)


def test_bench_points_and_fit(tmp_path):
    res = run_bench([2, 3, 4, 5], FAST, rows=60)
    assert [p.feature_count for p in res.points] == [2, 3, 4, 5]
    assert all(p.phi_calls == p.feature_count for p in res.points)
    assert all(p.seconds > 0 and p.rows == 60 for p in res.points)
    assert 0.0 <= res.r_squared <= 1.0
    res.write_csv(tmp_path / "b.csv")
    rows = list(csv.DictReader((tmp_path / "b.csv").open()))
    assert [int(r["feature_count"]) for r in rows] == [2, 3, 4, 5]
    assert set(res.to_dict()) == {"points", "linear_fit", "temporal"}


@pytest.mark.parametrize("counts", [[1, 2, 3], [4, 3, 5, 6], [1, 1, 2, 3], [0, 1, 2, 3]])
def test_bench_rejects_counts(counts):
    with pytest.raises(ValueError):
        run_bench(counts, FAST)


def test_fit_on_exact_line():
    pts = tuple(BenchPoint(c, 0.5 + 0.25 * c, c, 500) for c in (8, 16, 32, 64))
    fit = stats.linregress([p.feature_count for p in pts], [p.seconds for p in pts])
    res = BenchResult(pts, fit.slope, fit.intercept, fit.rvalue ** 2, False)
    assert res.slope == pytest.approx(0.25) and fit_is_linear(res)
    assert res.ratio(64, 32) == pytest.approx((0.5 + 16) / (0.5 + 8))


@pytest.mark.xfail(strict=True, reason="the estimator's cost depends on batch size and step "
                   "count, not on row count, so doubling rows leaves time unchanged")
def test_doubling_rows_doubles_time():
    time_selection(8, BENCH_CONFIG, rows=500)  # warm-up
    t500 = min(time_selection(8, BENCH_CONFIG, rows=500).seconds for _ in range(2))
    t1000 = min(time_selection(8, BENCH_CONFIG, rows=1000).seconds for _ in range(2))
    assert 1.5 <= t1000 / t500 <= 2.5
