import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fsnid.approximator import DenseParams
from fsnid.estimation import (
    TAG_PHI,
    Batch,
    EstimatorConfig,
    PhiEstimate,
    _IndexStream,
    dv_bound,
    estimate_mi,
    estimate_phi,
    phi_runs,
    sample_joint,
    sample_marginal,
    sequence_batches,
)
from fsnid.ingest import normalize
from fsnid.synthetic import SyntheticSpec, generate, plugin_mi

from conftest import make_dataset


@pytest.fixture
def small(rng):
    n = 50
    return make_dataset(rng.normal(size=(n, 3)), rng.integers(0, 3, n))


# ----------------------------------------------------------------------------- config


@pytest.mark.parametrize("kw", [dict(batch_size=1), dict(tail_window=0),
                                dict(steps=10, tail_window=11), dict(learning_rate=0),
                                dict(temporal=True, seq_len=1), dict(repeats=0)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        EstimatorConfig(**kw)


def test_temporal_default_budget():
    cfg = EstimatorConfig.temporal_default()
    assert (cfg.steps, cfg.seq_len, cfg.batch_size, cfg.temporal) == (20000, 10, 100, True)
    assert EstimatorConfig().steps == 10000


# ----------------------------------------------------------------------------- samplers


def test_joint_full_draw_is_permutation(small, rng):
    b = sample_joint(small, range(3), small.n_rows, rng)
    assert sorted(b.feature_rows.tolist()) == list(range(small.n_rows))
    np.testing.assert_array_equal(b.features, small.features[b.feature_rows])
    np.testing.assert_array_equal(b.labels, small.labels[b.feature_rows])


def test_joint_single_column(small, rng):
    b = sample_joint(small, [1], 7, rng)
    assert b.features.shape == (7, 1)
    np.testing.assert_array_equal(b.features[:, 0], small.features[b.feature_rows, 1])
    np.testing.assert_array_equal(b.labels, small.labels[b.feature_rows])


def test_samplers_deterministic(small):
    for fn in (sample_joint, sample_marginal):
        a = fn(small, [0, 2], 10, np.random.default_rng(5))
        b = fn(small, [0, 2], 10, np.random.default_rng(5))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)


@given(st.integers(2, 60), st.integers(0, 2**32 - 1))
def test_marginal_label_row_differs(n, seed):
    rng = np.random.default_rng(seed)
    d = make_dataset(rng.normal(size=(n, 2)), rng.integers(0, 2, n), classes=("0", "1"))
    b = sample_marginal(d, [0, 1], int(rng.integers(1, n + 1)), rng)
    assert np.all(b.feature_rows != b.label_rows)
    np.testing.assert_array_equal(b.labels, d.labels[b.label_rows])
    assert len(set(b.feature_rows.tolist())) == len(b.feature_rows)


def test_marginal_constant_target(rng):
    d = make_dataset(rng.normal(size=(20, 1)), np.zeros(20, dtype=int), classes=("a", "b"))
    j, m = sample_joint(d, [0], 10, rng), sample_marginal(d, [0], 10, rng)
    np.testing.assert_array_equal(j.labels, m.labels)


def test_marginal_label_frequencies(rng):
    labels = np.r_[np.zeros(70, int), np.ones(20, int), np.full(10, 2)]
    d = make_dataset(rng.normal(size=(100, 1)), labels)
    draws = np.concatenate([sample_marginal(d, [0], 100, rng).labels for _ in range(100)])
    freq = np.bincount(draws, minlength=3) / draws.size
    np.testing.assert_allclose(freq, [0.7, 0.2, 0.1], atol=0.02)


def test_sampler_errors(small, rng):
    with pytest.raises(ValueError, match="exceeds"):
        sample_joint(small, [0], small.n_rows + 1, rng)
    with pytest.raises(ValueError, match="non-empty"):
        sample_marginal(small, [], 3, rng)


def test_sequence_s1_matches_static(small):
    for mode, fn in (("joint", sample_joint), ("marginal", sample_marginal)):
        a = sequence_batches(small, [0, 1], 9, 1, np.random.default_rng(3), mode)
        b = fn(small, [0, 1], 9, np.random.default_rng(3))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)


@given(st.integers(2, 8), st.sampled_from(["joint", "marginal"]), st.integers(0, 2**32 - 1))
def test_sequence_windows_consecutive(s, mode, seed):
    rng = np.random.default_rng(seed)
    n = 40
    d = make_dataset(np.arange(n, dtype=float)[:, None] * [1, 10], np.arange(n) % 2)
    b = sequence_batches(d, [0, 1], 5, s, rng, mode)
    assert b.features.shape == (5, s, 2)
    np.testing.assert_array_equal(b.features[..., 0], b.feature_rows[:, None] + np.arange(s))
    np.testing.assert_array_equal(b.labels, d.labels[b.label_rows[:, None] + np.arange(s)])
    assert b.feature_rows.max() <= n - s
    if mode == "marginal":
        assert np.all(b.label_rows != b.feature_rows)
    else:
        np.testing.assert_array_equal(b.label_rows, b.feature_rows)


def test_sequence_too_short(rng):
    d = make_dataset(np.zeros((5, 1)), [0, 1, 0, 1, 0])
    with pytest.raises(ValueError, match="window length"):
        sequence_batches(d, [0], 1, 5, rng)
    with pytest.raises(ValueError, match="mode"):
        sequence_batches(d, [0], 1, 2, rng, "both")


@given(st.integers(2, 200), st.integers(2, 50), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_index_stream_contract(n, b, steps, seed):
    b = min(b, n)
    s = _IndexStream(np.random.SeedSequence(seed), n, b)
    joint, marg = s.take(steps)
    assert joint.shape == marg.shape == (steps, b)
    assert np.all((joint >= 0) & (joint < n)) and np.all(joint != marg)
    assert all(len(set(r.tolist())) == b for r in joint)


def test_index_stream_independent_of_chunking():
    a = _IndexStream(np.random.SeedSequence(9), 37, 5)
    b = _IndexStream(np.random.SeedSequence(9), 37, 5)
    ja, _ = a.take(23)
    jb = np.concatenate([b.take(k)[0] for k in (4, 11, 8)])
    np.testing.assert_array_equal(ja, jb)


# ----------------------------------------------------------------------------- bound


def _identity_net(n_classes=2):
    w1 = np.zeros((1 + n_classes, 1))
    w1[0, 0] = 1.0
    return DenseParams(w1=w1, b1=np.zeros(1), w2=np.ones((1, 1)), b2=np.zeros(1))


def _batch(vals, labels):
    vals = np.asarray(vals, float)[:, None]
    rows = np.arange(len(labels))
    return Batch(vals, np.asarray(labels), rows, rows)


def test_dv_bound_hand_example():
    got = dv_bound(_identity_net(), _batch([1, 1], [0, 1]), _batch([0, 2], [1, 0]))
    assert got == pytest.approx(1 - math.log((math.exp(0) + math.exp(2)) / 2), abs=1e-12)
    assert got == pytest.approx(-0.4338, abs=5e-5)


@pytest.mark.parametrize("c", [0.0, 3.7, -2.0])
def test_dv_bound_constant_statistic_is_zero(c):
    p = _identity_net()
    p.w2[:] = 0.0
    p.b2[:] = c
    assert dv_bound(p, _batch([1, 5], [0, 1]), _batch([0, 2], [1, 0])) == pytest.approx(0.0,
                                                                                       abs=1e-12)


# ----------------------------------------------------------------------------- estimators


def test_empty_set_has_zero_mi(small):
    e = estimate_mi(small, [], EstimatorConfig())
    assert e.value == e.raw == 0.0 and e.trace.size == 0


def test_estimate_contract_and_reproducibility(small):
    cfg = EstimatorConfig(batch_size=10, steps=60, tail_window=25, seed=3)
    a = estimate_mi(small, [0, 1], cfg)
    b = estimate_mi(small, [0, 1], cfg)
    assert a.raw == pytest.approx(a.trace[-25:].mean(), abs=0)
    assert a.value == max(a.raw, 0.0) and math.isfinite(a.value)
    assert a.value == b.value
    np.testing.assert_array_equal(a.trace, b.trace)
    c = estimate_mi(small, [0, 1], EstimatorConfig(batch_size=10, steps=60, tail_window=25,
                                                   seed=4))
    assert c.raw != a.raw


def test_estimate_rejects_bad_columns(small):
    with pytest.raises(ValueError, match="out of range"):
        estimate_mi(small, [5], EstimatorConfig(batch_size=10, steps=5, tail_window=5))


def _xy(seed, rows=4000, noise=0):
    d, _ = generate(SyntheticSpec("perfectly-redundant-pair", rows=rows,
                                  noise_features=noise, seed=seed))
    return d


def test_y_equals_x_estimate():
    d = _xy(0)
    e = estimate_mi(normalize(d), [0], EstimatorConfig(seed=0))
    assert 0.55 <= e.value <= 0.72
    assert e.value <= plugin_mi(d, [0]) + 0.05


def test_independent_estimate_small():
    d, _ = generate(SyntheticSpec("irrelevant", rows=4000, noise_features=2, seed=1))
    assert estimate_mi(normalize(d), [0, 1], EstimatorConfig(seed=1)).value <= 0.05


def test_duplicate_column_does_not_change_estimate():
    d = normalize(_xy(2))
    one = estimate_mi(d, [0], EstimatorConfig(seed=2)).value
    two = estimate_mi(d, [0, 1], EstimatorConfig(seed=2)).value
    assert abs(one - two) <= 0.05


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(4))
def test_lower_bound_and_monotone_on_oracle_instances(seed):
    d, _ = generate(SyntheticSpec("redundant-pair", rows=2000, seed=50 + seed))
    dn = normalize(d)
    cfg = EstimatorConfig(seed=seed, steps=4000)
    est = {cols: estimate_mi(dn, list(cols), cfg).value for cols in [(0,), (0, 1)]}
    for cols, v in est.items():
        assert v <= plugin_mi(d, list(cols)) + 0.05
    assert est[(0, 1)] >= est[(0,)] - 0.05


def test_phi_from_runs():
    p = PhiEstimate.from_runs(2, [0.1, 0.3, -0.1])
    assert p.mean == pytest.approx(0.1)
    assert p.std == pytest.approx(0.2)
    assert PhiEstimate.from_runs(0, [-0.2]).std == 0.0
    assert PhiEstimate.from_runs(0, [-0.2]).value == 0.0


def test_phi_requires_member(small):
    with pytest.raises(ValueError, match="not in the current set"):
        phi_runs(small, [0, 1], 2, EstimatorConfig(batch_size=10, steps=5, tail_window=5))


def test_phi_is_raw_difference_of_two_estimators(small):
    cfg = EstimatorConfig(batch_size=10, steps=30, tail_window=10, repeats=3, seed=11)
    runs = phi_runs(small, [0, 2], 2, cfg)
    assert len(runs) == 3
    full = estimate_mi(small, [0, 2], cfg, stream=(TAG_PHI, 2, 1, 0)).raw
    red = estimate_mi(small, [0], cfg, stream=(TAG_PHI, 2, 1, 1)).raw
    assert runs[1] == full - red


def test_phi_parallel_matches_serial(small):
    cfg = EstimatorConfig(batch_size=10, steps=30, tail_window=10, repeats=3, seed=1)
    assert phi_runs(small, [0, 1], 0, cfg) == phi_runs(small, [0, 1], 0, replace(cfg, jobs=3))


def test_phi_noise_column_near_zero():
    d = normalize(_xy(3, noise=1))
    phi = estimate_phi(d, [0, 2], 2, EstimatorConfig(seed=3))
    assert abs(phi.mean) <= max(2 * phi.std, 0.01)
    assert len(phi.runs) == 5


def test_phi_duplicated_pair_near_zero():
    d = normalize(_xy(4))
    phi = estimate_phi(d, [0, 1], 0, EstimatorConfig(seed=4))
    assert abs(phi.mean) <= 0.05


def test_phi_xor_synergy():
    d, _ = generate(SyntheticSpec("xor-synergy", rows=4000, seed=5))
    phi = estimate_phi(normalize(d), [0, 1], 0, EstimatorConfig(seed=5))
    assert 0.5 <= phi.value <= 0.72
