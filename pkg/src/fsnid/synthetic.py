"""Synthetic datasets with known information structure, and exact oracles.

``plugin_mi`` computes the empirical mutual information of discrete columns
from frequency counts, which is exact for the empirical distribution and
serves as ground truth for the neural estimators.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .ingest import Dataset

KINDS = (
    "irrelevant",
    "redundant-pair",
    "perfectly-redundant-pair",
    "xor-synergy",
    "parity-temporal",
    "bench-binary",
)

MAX_COLUMN_SUPPORT = 16
MAX_CELLS = 4096
SUBSET_EPS = 0.01


class OracleError(ValueError):
    """Columns are not discrete enough for the plug-in estimator."""


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    rows: int = 4000
    noise_features: int = 0
    seed: int = 0
    bench_features: int = 8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.rows < 2:
            raise ValueError("rows must be at least 2")
        if self.noise_features < 0:
            raise ValueError("noise_features must be non-negative")
        if self.kind == "irrelevant" and self.noise_features < 1:
            raise ValueError("the irrelevant kind needs at least one noise feature")
        if self.kind == "bench-binary" and self.bench_features < 1:
            raise ValueError("bench_features must be positive")


@dataclass(frozen=True)
class Annotation:
    """Ground truth for a generated dataset.

    ``informative`` lists every column that carries information about the
    target on its own or jointly; ``minimal_subsets`` lists the smallest
    column sets that carry all of it.
    """

    kind: str
    informative: tuple[str, ...]
    minimal_subsets: tuple[tuple[str, ...], ...]
    temporal: bool = False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "informative": list(self.informative),
            "minimal_subsets": [list(s) for s in self.minimal_subsets],
            "temporal": self.temporal,
        }


def _bits(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape)


def generate(spec: SyntheticSpec) -> tuple[Dataset, Annotation]:
    """Build the dataset described by ``spec``.

    Signal columns are ``x1, x2, ...``; appended independent fair-bit columns
    are ``noise1, noise2, ...``.  Values are raw 0/1 (not standardised).
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.rows
    kind = spec.kind
    temporal = False
    if kind == "irrelevant":
        sig = np.zeros((n, 0), dtype=np.int64)
        y = _bits(rng, n)
        informative, minimal = (), ((),)
    elif kind == "perfectly-redundant-pair":
        x1 = _bits(rng, n)
        sig = np.column_stack([x1, x1])
        y = x1.copy()
        informative, minimal = ("x1", "x2"), (("x1",), ("x2",))
    elif kind == "redundant-pair":
        # y = 2*x1 + x2 and x3 = x1 xor x2: any two columns determine y,
        # each one alone carries half of it
        x1, x2 = _bits(rng, n), _bits(rng, n)
        sig = np.column_stack([x1, x2, x1 ^ x2])
        y = 2 * x1 + x2
        informative = ("x1", "x2", "x3")
        minimal = (("x1", "x2"), ("x1", "x3"), ("x2", "x3"))
    elif kind == "xor-synergy":
        x1, x2 = _bits(rng, n), _bits(rng, n)
        sig = np.column_stack([x1, x2])
        y = x1 ^ x2
        informative, minimal = ("x1", "x2"), (("x1", "x2"),)
    elif kind == "parity-temporal":
        x = _bits(rng, n + 2)
        y = (x[2:] ^ x[1:-1] ^ x[:-2])
        sig = x[2:, None]
        informative, minimal = ("x1",), (("x1",),)
        temporal = True
    else:  # bench-binary
        sig = _bits(rng, (n, spec.bench_features))
        y = _bits(rng, n)
        informative, minimal = (), ((),)
    noise = _bits(rng, (n, spec.noise_features))
    names = tuple(f"x{j + 1}" for j in range(sig.shape[1]))
    names += tuple(f"noise{j + 1}" for j in range(spec.noise_features))
    feats = np.column_stack([sig, noise]).astype(np.float64) if names else np.zeros((n, 0))
    n_classes = 4 if kind == "redundant-pair" else 2
    d = Dataset(
        feature_names=names,
        features=feats.reshape(n, len(names)),
        labels=y.astype(np.intp),
        class_names=tuple(str(c) for c in range(n_classes)),
    )
    return d, Annotation(kind, informative, minimal, temporal)


def _codes(values: np.ndarray, name: str) -> np.ndarray:
    uniq, codes = np.unique(values, return_inverse=True)
    if uniq.size > MAX_COLUMN_SUPPORT:
        raise OracleError(
            f"column {name!r} has {uniq.size} distinct values (limit {MAX_COLUMN_SUPPORT}); "
            "discretise it first")
    return codes.reshape(-1)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def plugin_mi(d: Dataset, cols, target=None) -> float:
    """Empirical I(cols; target) in nats from joint frequency counts.

    ``target`` defaults to the class labels; it may also be a column index.
    The joint support of ``cols`` times the target support must stay within
    ``MAX_CELLS``.
    """
    cols = list(cols)
    if target is None:
        t = _codes(d.labels, "label")
    else:
        t = _codes(d.features[:, target], d.feature_names[target])
    if not cols:
        return 0.0
    n = d.n_rows
    key = np.zeros(n, dtype=np.int64)
    cells = 1
    for c in cols:
        codes = _codes(d.features[:, c], d.feature_names[c])
        k = int(codes.max()) + 1
        cells *= k
        key = key * k + codes
    t_k = int(t.max()) + 1
    if cells * t_k > MAX_CELLS:
        raise OracleError(
            f"joint support {cells} x {t_k} classes exceeds {MAX_CELLS} cells")
    _, xk = np.unique(key, return_inverse=True)
    xk = xk.reshape(-1)
    joint = np.bincount(xk * t_k + t, minlength=(xk.max() + 1) * t_k)
    hx = _entropy(np.bincount(xk), n)
    ht = _entropy(np.bincount(t), n)
    hxt = _entropy(joint, n)
    return max(hx + ht - hxt, 0.0)


@dataclass(frozen=True)
class SubsetRanking:
    scores: dict  # tuple of column indices -> plug-in MI
    full_mi: float
    minimal: tuple[tuple[int, ...], ...]


def exhaustive_best_subsets(d: Dataset, target=None, max_features: int = 4,
                            eps: float = SUBSET_EPS) -> SubsetRanking:
    """Score every column subset; keep the smallest within ``eps`` of the full set."""
    if d.n_features > max_features:
        raise OracleError(
            f"{d.n_features} features exceed the exhaustive limit of {max_features}")
    idx = range(d.n_features)
    scores = {}
    for k in range(d.n_features + 1):
        for sub in itertools.combinations(idx, k):
            scores[sub] = plugin_mi(d, sub, target)
    full = scores[tuple(idx)]
    good = [s for s, v in scores.items() if v >= full - eps]
    k_min = min(len(s) for s in good)
    return SubsetRanking(scores, full, tuple(s for s in good if len(s) == k_min))
