"""Neural mutual-information estimation and the per-feature Φ measure.

``estimate_mi`` trains a fresh statistic network by gradient ascent on the
Donsker-Varadhan bound

    I(X; Y) >= E_P[T(x, y)] - log E_{P_X x P_Y}[exp T(x, y)]

and reports the average bound over the last ``tail_window`` steps.  The label
enters the network one-hot encoded, concatenated to the feature vector (or to
every timestep of a window in the temporal variant).

``estimate_phi`` measures what a feature adds to a set: the MI of the set
minus the MI of the set without that feature, each from its own estimator,
repeated with fresh seeds.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .approximator import (
    DenseParams,
    OptimizerState,
    RecurrentParams,
    dense_forward,
    recurrent_forward,
)
from .ingest import Dataset


class EstimationError(FloatingPointError):
    """Training diverged (the bound became non-finite)."""


# stream tags keep the seed trees of unrelated estimators disjoint
TAG_PHI = 1
TAG_NULL = 2
TAG_NULL_COLUMN = 3
TAG_MI = 4

_CHUNK = 1000  # steps of indices materialised at once


@dataclass(frozen=True)
class EstimatorConfig:
    batch_size: int = 100
    steps: int = 10_000
    tail_window: int = 200
    learning_rate: float = 1e-4
    seed: int = 0
    temporal: bool = False
    seq_len: int = 10
    repeats: int = 5
    jobs: int = 1
    hidden: int = 50

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not 1 <= self.tail_window <= self.steps:
            raise ValueError("tail_window must lie in [1, steps]")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.temporal and self.seq_len < 2:
            raise ValueError("the temporal estimator needs seq_len >= 2")
        if self.repeats < 1:
            raise ValueError("repeats must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")
        if self.hidden < 1:
            raise ValueError("hidden must be positive")

    @classmethod
    def temporal_default(cls, **overrides) -> "EstimatorConfig":
        kw = dict(steps=20_000, temporal=True, seq_len=10)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size, "steps": self.steps,
            "tail_window": self.tail_window, "learning_rate": self.learning_rate,
            "seed": self.seed, "temporal": self.temporal, "seq_len": self.seq_len,
            "repeats": self.repeats, "hidden": self.hidden,
        }


@dataclass(frozen=True)
class MiEstimate:
    """``value`` is the tail mean clamped at zero; ``raw`` keeps its sign."""

    value: float
    raw: float
    trace: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class PhiEstimate:
    feature_index: int
    runs: tuple[float, ...]
    mean: float
    std: float

    @classmethod
    def from_runs(cls, feature_index: int, runs) -> "PhiEstimate":
        runs = tuple(float(r) for r in runs)
        arr = np.asarray(runs)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return cls(feature_index=feature_index, runs=runs, mean=float(arr.mean()), std=std)

    @property
    def value(self) -> float:
        """Mean Φ clamped at zero, for reporting."""
        return max(self.mean, 0.0)


# ----------------------------------------------------------------------------- sampling


@dataclass(frozen=True)
class Batch:
    """Feature rows paired with label rows (equal for joint draws)."""

    features: np.ndarray  # (b, k), or (b, s, k) for windows
    labels: np.ndarray  # (b,), or (b, s)
    feature_rows: np.ndarray  # (b,) row index, or window start
    label_rows: np.ndarray


def _check_batch(n: int, b: int, cols):
    if len(cols) == 0:
        raise ValueError("cols must be non-empty")
    if b < 1:
        raise ValueError("batch size must be positive")
    if b > n:
        raise ValueError(f"batch size {b} exceeds the {n} available rows")


def sample_joint(d: Dataset, cols, b: int, rng: np.random.Generator) -> Batch:
    """``b`` distinct rows drawn uniformly, each with its own label."""
    cols = list(cols)
    _check_batch(d.n_rows, b, cols)
    rows = rng.choice(d.n_rows, size=b, replace=False)
    return Batch(d.features[np.ix_(rows, cols)], d.labels[rows], rows, rows)


def sample_marginal(d: Dataset, cols, b: int, rng: np.random.Generator) -> Batch:
    """Like :func:`sample_joint`, but every label comes from another row.

    Each pair's label row is its feature row shifted cyclically by a random
    offset in ``[1, n - 1]``.
    """
    cols = list(cols)
    _check_batch(d.n_rows, b, cols)
    if d.n_rows < 2:
        raise ValueError("marginal sampling needs at least 2 rows")
    rows = rng.choice(d.n_rows, size=b, replace=False)
    lab_rows = (rows + rng.integers(1, d.n_rows, size=b)) % d.n_rows
    return Batch(d.features[np.ix_(rows, cols)], d.labels[lab_rows], rows, lab_rows)


def sequence_batches(d: Dataset, cols, b: int, s: int, rng: np.random.Generator,
                     mode: str = "joint") -> Batch:
    """``b`` windows of ``s`` consecutive rows.

    Window starts are distinct and uniform over ``[0, n - s]``.  In
    ``"marginal"`` mode the label window starts at a cyclically shifted, and
    therefore different, start.  With ``s = 1`` this reproduces the static
    samplers draw for draw.
    """
    if mode not in ("joint", "marginal"):
        raise ValueError(f"mode must be 'joint' or 'marginal', got {mode!r}")
    cols = list(cols)
    if s < 1:
        raise ValueError("window length must be positive")
    if d.n_rows < s + (1 if s > 1 else 0):
        raise ValueError(f"dataset has {d.n_rows} rows, shorter than window length {s}")
    n_starts = d.n_rows - s + 1
    _check_batch(n_starts, b, cols)
    starts = rng.choice(n_starts, size=b, replace=False)
    if mode == "joint":
        lab_starts = starts
    else:
        if n_starts < 2:
            raise ValueError("marginal windows need at least 2 distinct start positions")
        lab_starts = (starts + rng.integers(1, n_starts, size=b)) % n_starts
    offs = np.arange(s)
    fr = starts[:, None] + offs
    lr = lab_starts[:, None] + offs
    feats = d.features[:, cols][fr]
    if s == 1:
        return Batch(feats[:, 0], d.labels[lr[:, 0]], starts, lab_starts)
    return Batch(feats, d.labels[lr], starts, lab_starts)


class _IndexStream:
    """Bulk generator of (joint, marginal) index blocks for a training run.

    Joint batches are consecutive slices of random permutations of the
    ``n_units`` positions (rows, or window starts), so every batch is drawn
    without replacement.  Marginal positions are cyclic shifts by an
    independent offset.  Two child generators keep the output independent
    of how many steps are requested per call.
    """

    def __init__(self, seed_seq: np.random.SeedSequence, n_units: int, b: int):
        if b > n_units:
            raise ValueError(f"batch size {b} exceeds the {n_units} available rows")
        if n_units < 2:
            raise ValueError("need at least 2 rows (or window starts) to sample from")
        perm_seq, off_seq = seed_seq.spawn(2)
        self._perm_rng = np.random.default_rng(perm_seq)
        self._off_rng = np.random.default_rng(off_seq)
        self._n, self._b = n_units, b
        self._per_perm = n_units // b
        self._buf = np.empty((0, b), dtype=np.intp)

    def take(self, steps: int) -> tuple[np.ndarray, np.ndarray]:
        while self._buf.shape[0] < steps:
            need = steps - self._buf.shape[0]
            k = -(-need // self._per_perm)
            perms = self._perm_rng.permuted(np.tile(np.arange(self._n), (k, 1)), axis=1)
            chunks = perms[:, :self._per_perm * self._b].reshape(-1, self._b)
            self._buf = np.concatenate([self._buf, chunks.astype(np.intp)])
        joint, self._buf = self._buf[:steps], self._buf[steps:]
        marg = (joint + self._off_rng.integers(1, self._n, size=joint.shape)) % self._n
        return joint, marg


# ----------------------------------------------------------------------------- bound


def _encode(features: np.ndarray, labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.concatenate([features, np.eye(n_classes)[labels]], axis=-1)


def dv_bound(params, joint: Batch, marginal: Batch, n_classes: int | None = None) -> float:
    """Donsker-Varadhan bound of ``params`` on one joint and one marginal batch."""
    if joint.features.shape[0] == 0 or marginal.features.shape[0] == 0:
        raise ValueError("batches must be non-empty")
    if joint.features.shape[1:] != marginal.features.shape[1:]:
        raise ValueError("joint and marginal batches differ in feature shape")
    if n_classes is None:
        n_classes = params.in_dim - joint.features.shape[-1]
    fwd = recurrent_forward if isinstance(params, RecurrentParams) else dense_forward
    tj = np.atleast_1d(fwd(params, _encode(joint.features, joint.labels, n_classes)))
    tm = np.atleast_1d(fwd(params, _encode(marginal.features, marginal.labels, n_classes)))
    if not (np.all(np.isfinite(tj)) and np.all(np.isfinite(tm))):
        raise EstimationError("statistic network produced a non-finite output")
    value, _, _ = kernels.dv_value_and_upstream(tj, tm)
    return float(value)


# ----------------------------------------------------------------------------- estimators


def _seed_seq(cfg: EstimatorConfig, stream) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(cfg.seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)])


def estimate_mi(d: Dataset, cols, cfg: EstimatorConfig, stream=(TAG_MI,)) -> MiEstimate:
    """Train one statistic network on ``cols`` and return its tail-averaged bound.

    ``stream`` extends ``cfg.seed`` into an independent random stream, so
    several estimators can share one config.  The MI of an empty column set
    is exactly zero and needs no training.
    """
    cols = list(cols)
    if len(cols) == 0:
        return MiEstimate(value=0.0, raw=0.0, trace=np.zeros(0))
    bad = [c for c in cols if not 0 <= c < d.n_features]
    if bad:
        raise ValueError(f"column indices out of range: {bad}")
    init_seq, data_seq = _seed_seq(cfg, stream).spawn(2)
    init_rng = np.random.default_rng(init_seq)
    X = np.ascontiguousarray(d.features[:, cols])
    in_dim = len(cols) + d.n_classes
    s = cfg.seq_len if cfg.temporal else 1
    if cfg.temporal:
        if d.n_rows < s + 1:
            raise ValueError(f"dataset has {d.n_rows} rows; temporal windows need {s + 1}")
        params = RecurrentParams.init(in_dim, init_rng, hidden=cfg.hidden)
        train = kernels.recurrent_dv_train
    else:
        params = DenseParams.init(in_dim, init_rng, hidden=cfg.hidden)
        train = kernels.dense_dv_train
    state = OptimizerState.for_params(params, lr=cfg.learning_rate)
    stream_ = _IndexStream(data_seq, d.n_rows - s + 1, cfg.batch_size)
    trace = np.empty(cfg.steps)
    offs = np.arange(s)
    pos = 0
    while pos < cfg.steps:
        k = min(_CHUNK, cfg.steps - pos)
        joint, marg = stream_.take(k)
        if cfg.temporal:
            joint = joint[..., None] + offs
            marg = marg[..., None] + offs
        done = train(X, d.labels, joint, marg, params, state, trace[pos:pos + k])
        if done < k:
            raise EstimationError(
                f"DV bound became non-finite at step {pos + done} "
                f"(cols={cols}, lr={cfg.learning_rate})")
        pos += k
    raw = float(trace[-cfg.tail_window:].mean())
    return MiEstimate(value=max(raw, 0.0), raw=raw, trace=trace)


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def phi_runs(d: Dataset, current_set, i: int, cfg: EstimatorConfig, tag: int = TAG_PHI,
             repeats: int | None = None) -> list[float]:
    """Raw per-repeat differences I(set) - I(set without i)."""
    current = list(current_set)
    if i not in current:
        raise ValueError(f"feature {i} is not in the current set")
    reduced = [c for c in current if c != i]
    R = cfg.repeats if repeats is None else repeats
    jobs = [(r, which) for r in range(R) for which in (0, 1)]

    def one(job):
        r, which = job
        cols = current if which == 0 else reduced
        return estimate_mi(d, cols, cfg, stream=(tag, i, r, which)).raw

    vals = _map(one, jobs, cfg.jobs)
    return [vals[2 * r] - vals[2 * r + 1] for r in range(R)]


def estimate_phi(d: Dataset, current_set, i: int, cfg: EstimatorConfig,
                 repeats: int | None = None) -> PhiEstimate:
    """Φ of feature ``i`` relative to ``current_set`` over ``repeats`` runs.

    Each run differences the raw (unclamped) tail means of two independently
    seeded estimators so that estimator noise stays symmetric about the true
    value; :attr:`PhiEstimate.value` gives the clamped figure.
    """
    return PhiEstimate.from_runs(i, phi_runs(d, current_set, i, cfg, repeats=repeats))

