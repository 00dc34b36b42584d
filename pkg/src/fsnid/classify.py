"""Softmax classifiers used to check that a selected subset is sufficient."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approximator import (
    DenseParams,
    RecurrentParams,
    dense_backward_cached,
    dense_forward_cached,
    recurrent_backward_cached,
    recurrent_forward_cached,
)
from .ingest import Dataset

BENIGN = 0


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    hidden: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0 or min(self.epochs, self.batch_size, self.hidden) < 1:
            raise ValueError("learning_rate, epochs, batch_size and hidden must be positive")


@dataclass
class ClassifierParams:
    params: DenseParams | RecurrentParams
    cols: tuple[int, ...]
    col_names: tuple[str, ...]
    n_classes: int
    seq_len: int | None = None  # None for the dense model
    losses: list[float] = field(default_factory=list)  # mean training NLL per epoch


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    macro_f1: float
    fpr: float | None  # None when the test part has no benign rows

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "fpr": self.fpr}


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _nll_and_grad(logits: np.ndarray, labels: np.ndarray):
    p = softmax(logits)
    B = labels.shape[0]
    nll = -np.log(np.maximum(p[np.arange(B), labels], 1e-300)).mean()
    g = p
    g[np.arange(B), labels] -= 1.0
    return float(nll), g / B


def _sgd(params, grads, lr: float):
    for p, g in zip(params.arrays(), grads.arrays()):
        p -= lr * g


def _resolve_cols(d: Dataset, cols) -> tuple[tuple[int, ...], tuple[str, ...]]:
    cols = list(cols)
    if not cols:
        raise ClassifierError("at least one feature column is required")
    if all(isinstance(c, str) for c in cols):
        idx = d.column_index(cols)
    else:
        idx = [int(c) for c in cols]
        bad = [c for c in idx if not 0 <= c < d.n_features]
        if bad:
            raise ClassifierError(f"column indices out of range: {bad}")
    return tuple(idx), tuple(d.feature_names[i] for i in idx)


def _check_classes(d: Dataset):
    if d.n_classes < 2 or len(np.unique(d.labels)) < 2:
        raise ClassifierError("training data has a single class")


def _fit(params, batches, forward, backward, cfg: ClassifierConfig, rng, n_items: int):
    losses = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n_items)
        total = 0.0
        for start in range(0, n_items, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            x, y = batches(idx)
            out, cache = forward(params, x)
            loss, g = _nll_and_grad(out, y)
            if not np.isfinite(loss):
                raise FloatingPointError("classifier training diverged")
            _sgd(params, backward(params, cache, g), cfg.learning_rate)
            total += loss * len(idx)
        losses.append(total / n_items)
    return losses


def train_classifier(train: Dataset, cols, cfg: ClassifierConfig = ClassifierConfig()) \
        -> ClassifierParams:
    """Minibatch SGD on the mean negative log-likelihood of a relu MLP."""
    _check_classes(train)
    idx, names = _resolve_cols(train, cols)
    rng = np.random.default_rng(cfg.seed)
    params = DenseParams.init(len(idx), rng, hidden=cfg.hidden, out_dim=train.n_classes)
    X = train.features[:, idx]
    y = train.labels
    losses = _fit(params, lambda r: (X[r], y[r]), dense_forward_cached,
                  dense_backward_cached, cfg, rng, train.n_rows)
    return ClassifierParams(params, idx, names, train.n_classes, None, losses)


def _window_rows(n: int, s: int) -> np.ndarray:
    # windows ending at row t for t = s-1 .. n-1
    return np.arange(s - 1, n)[:, None] - np.arange(s - 1, -1, -1)


def train_sequence_classifier(train: Dataset, cols, s: int,
                              cfg: ClassifierConfig = ClassifierConfig()) -> ClassifierParams:
    """LSTM classifier over windows of ``s`` rows, labelled by their last row."""
    if s < 1:
        raise ClassifierError("window length must be positive")
    if train.n_rows < s + 1:
        raise ClassifierError(f"need at least {s + 1} training rows for windows of {s}")
    _check_classes(train)
    idx, names = _resolve_cols(train, cols)
    rng = np.random.default_rng(cfg.seed)
    params = RecurrentParams.init(len(idx), rng, hidden=cfg.hidden,
                                    out_dim=train.n_classes)
    X = train.features[:, idx]
    win = _window_rows(train.n_rows, s)
    y = train.labels[win[:, -1]]
    losses = _fit(params, lambda r: (X[win[r]], y[r]), recurrent_forward_cached,
                  recurrent_backward_cached, cfg, rng, win.shape[0])
    return ClassifierParams(params, idx, names, train.n_classes, s, losses)


def predict_proba(model: ClassifierParams, d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities and the true labels they correspond to.

    The sequence model scores every complete window of ``d``, so its output
    starts at row ``seq_len - 1``.
    """
    found = tuple(d.feature_names[i] if i < d.n_features else None for i in model.cols)
    if found != model.col_names:
        raise ClassifierError(
            f"test columns {list(found)} do not match training columns {list(model.col_names)}")
    X = d.features[:, model.cols]
    if model.seq_len is None:
        out, _ = dense_forward_cached(model.params, X)
        return softmax(out), d.labels
    if d.n_rows < model.seq_len:
        raise ClassifierError("test part is shorter than one window")
    win = _window_rows(d.n_rows, model.seq_len)
    out, _ = recurrent_forward_cached(model.params, X[win])
    return softmax(out), d.labels[win[:, -1]]


def metrics_from_predictions(y_true, y_pred, n_classes: int, benign: int = BENIGN) -> Metrics:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("need equally sized, non-empty label arrays")
    acc = float(np.mean(y_true == y_pred))
    f1s = []
    for c in range(n_classes):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        if tp + fp + fn == 0:
            continue  # class absent from both truth and prediction
        f1s.append(2 * tp / (2 * tp + fp + fn))
    ben = y_true == benign
    fpr = float(np.mean(y_pred[ben] != benign)) if ben.any() else None
    return Metrics(accuracy=acc, macro_f1=float(np.mean(f1s)), fpr=fpr)


def evaluate(model: ClassifierParams, test: Dataset, benign: int = BENIGN) -> Metrics:
    """Accuracy, macro F1 over classes, and benign false-positive rate."""
    proba, y = predict_proba(model, test)
    return metrics_from_predictions(y, proba.argmax(axis=1), model.n_classes, benign)
