import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fsnid.classify import (
    ClassifierConfig,
    ClassifierError,
    evaluate,
    metrics_from_predictions,
    predict_proba,
    train_classifier,
    train_sequence_classifier,
)
from fsnid.ingest import normalize_split, split
from fsnid.synthetic import SyntheticSpec, generate

from conftest import make_dataset


def test_all_correct():
    m = metrics_from_predictions([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert (m.accuracy, m.macro_f1, m.fpr) == (1.0, 1.0, 0.0)


def test_all_benign_flagged():
    m = metrics_from_predictions([0, 0, 1], [1, 1, 1], 2)
    assert m.fpr == 1.0


def test_attack_class_f1_example():
    # attack = class 1: TP 3, FP 1, FN 1, TN 5
    y_true = [1, 1, 1, 0, 1] + [0] * 5
    y_pred = [1, 1, 1, 1, 0] + [0] * 5
    tp, fp, fn = 3, 1, 1
    attack_f1 = 2 * tp / (2 * tp + fp + fn)
    assert attack_f1 == 0.75
    # benign has TP 5, FP 1, FN 1
    m = metrics_from_predictions(y_true, y_pred, 2)
    assert m.macro_f1 == pytest.approx((0.75 + 10 / 12) / 2)
    assert m.accuracy == 0.8 and m.fpr == pytest.approx(1 / 6)


def test_fpr_absent_without_benign_rows():
    assert metrics_from_predictions([1, 2], [1, 1], 3).fpr is None


@given(st.integers(2, 5).flatmap(lambda c: st.tuples(
    st.just(c), st.lists(st.tuples(st.integers(0, c - 1), st.integers(0, c - 1)),
                         min_size=1, max_size=50))))
def test_metrics_in_unit_interval(case):
    c, pairs = case
    t, p = zip(*pairs)
    m = metrics_from_predictions(list(t), list(p), c)
    for v in (m.accuracy, m.macro_f1, m.fpr):
        assert v is None or 0.0 <= v <= 1.0
    assert m.accuracy == pytest.approx(np.mean(np.array(t) == np.array(p)))


def test_separable_toy_learns_quickly(rng):
    x = rng.normal(size=(400, 2))
    y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(int)
    d = make_dataset(x, y)
    model = train_classifier(d, [0, 1], ClassifierConfig(epochs=50))
    assert evaluate(model, d).accuracy >= 0.99
    assert model.losses[-1] < model.losses[0]


def test_shuffled_labels_near_majority(rng):
    n = 2000
    x = rng.normal(size=(n, 3))
    y = (rng.random(n) < 0.7).astype(int)
    s = normalize_split(split(make_dataset(x, y), 0.8))
    acc = evaluate(train_classifier(s.train, [0, 1, 2], ClassifierConfig(epochs=20)),
                   s.test).accuracy
    majority = np.bincount(s.test.labels).max() / s.test.n_rows
    assert abs(acc - majority) <= 0.05


def test_perfect_feature(rng):
    d, _ = generate(SyntheticSpec("perfectly-redundant-pair", rows=2000, noise_features=2,
                                  seed=3))
    s = normalize_split(split(d, 0.8))
    model = train_classifier(s.train, ["x1"], ClassifierConfig(epochs=20))
    assert model.col_names == ("x1",)
    assert evaluate(model, s.test).accuracy >= 0.98


def test_sequence_s1_matches_dense():
    d, _ = generate(SyntheticSpec("redundant-pair", rows=1500, noise_features=1, seed=4))
    s = normalize_split(split(d, 0.8))
    cfg = ClassifierConfig(epochs=30)
    dense = evaluate(train_classifier(s.train, [0, 1, 2], cfg), s.test).accuracy
    seq = evaluate(train_sequence_classifier(s.train, [0, 1, 2], 1, cfg), s.test).accuracy
    assert abs(dense - seq) <= 0.03


@pytest.mark.slow
def test_parity_needs_memory():
    d, _ = generate(SyntheticSpec("parity-temporal", rows=4000, seed=5))
    s = normalize_split(split(d, 0.8))
    cfg = ClassifierConfig(learning_rate=0.1, batch_size=8)
    seq = evaluate(train_sequence_classifier(s.train, ["x1"], 10, cfg), s.test).accuracy
    dense = evaluate(train_classifier(s.train, ["x1"], cfg), s.test).accuracy
    assert seq >= 0.9
    assert abs(dense - 0.5) <= 0.05


def test_identical_windows_give_constant_prediction(rng):
    n = 100
    d = make_dataset(np.ones((n, 2)), rng.integers(0, 2, n))
    model = train_sequence_classifier(d, [0, 1], 4, ClassifierConfig(epochs=2))
    proba, labels = predict_proba(model, d)
    assert proba.shape == (n - 3, 2) and labels.shape == (n - 3,)
    assert np.ptp(proba, axis=0).max() == 0.0


def test_window_labels_are_last_row():
    n = 30
    d = make_dataset(np.arange(n, dtype=float), np.arange(n) % 3)
    model = train_sequence_classifier(d, [0], 5, ClassifierConfig(epochs=1))
    _, labels = predict_proba(model, d)
    np.testing.assert_array_equal(labels, d.labels[4:])


def test_training_is_seeded(rng):
    d = make_dataset(rng.normal(size=(100, 2)), rng.integers(0, 2, 100))
    a = train_classifier(d, [0, 1], ClassifierConfig(epochs=3, seed=9))
    b = train_classifier(d, [0, 1], ClassifierConfig(epochs=3, seed=9))
    assert a.losses == b.losses
    assert evaluate(a, d) == evaluate(b, d)


def test_output_dimension_is_class_count(rng):
    d = make_dataset(rng.normal(size=(50, 2)), rng.integers(0, 4, 50))
    model = train_classifier(d, [1], ClassifierConfig(epochs=1))
    assert model.params.out_dim == 4 and model.n_classes == 4


def test_classifier_errors(rng):
    d = make_dataset(rng.normal(size=(20, 2)), np.arange(20) % 2, names=("a", "b"))
    with pytest.raises(ClassifierError, match="at least one"):
        train_classifier(d, [])
    with pytest.raises(ClassifierError, match="out of range"):
        train_classifier(d, [5])
    with pytest.raises(ClassifierError, match="single class"):
        train_classifier(make_dataset(np.zeros((5, 1)), np.zeros(5, int), classes=("a", "b")),
                         [0])
    model = train_classifier(d, ["b"], ClassifierConfig(epochs=1))
    other = make_dataset(rng.normal(size=(5, 2)), np.arange(5) % 2, names=("a", "c"))
    with pytest.raises(ClassifierError, match="do not match"):
        evaluate(model, other)
    with pytest.raises(ValueError):
        ClassifierConfig(learning_rate=0)
