"""Sequential feature elimination with a null-model inclusion test."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import estimation
from .estimation import TAG_NULL, TAG_NULL_COLUMN, EstimatorConfig, PhiEstimate
from .ingest import Dataset

log = logging.getLogger(__name__)

NULL_COLUMN = "__null_model__"


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class NullModel:
    """Φ distribution of an injected standard-normal column."""

    phi_runs: tuple[float, ...]
    mean: float
    std: float

    @classmethod
    def from_runs(cls, runs) -> "NullModel":
        p = PhiEstimate.from_runs(-1, runs)
        return cls(phi_runs=p.runs, mean=p.mean, std=p.std)


@dataclass(frozen=True)
class Decision:
    name: str
    index: int
    phi: PhiEstimate
    included: bool
    statistic: float
    degenerate: bool = False


@dataclass
class SelectionReport:
    decisions: list[Decision]
    null: NullModel
    config: dict
    seconds: float
    feature_names: tuple[str, ...]
    phi_calls: int = 0

    @property
    def selected(self) -> list[int]:
        return sorted(d.index for d in self.decisions if d.included)

    @property
    def selected_names(self) -> list[str]:
        return [self.feature_names[i] for i in self.selected]

    def to_dict(self) -> dict:
        return {
            "selected": self.selected_names,
            "decisions": [
                {
                    "name": d.name,
                    "phi_mean": d.phi.value,
                    "phi_raw_mean": d.phi.mean,
                    "phi_std": d.phi.std,
                    "phi_runs": list(d.phi.runs),
                    "statistic": _json_float(d.statistic),
                    "included": d.included,
                    "degenerate": d.degenerate,
                }
                for d in self.decisions
            ],
            "null": {"mean": self.null.mean, "std": self.null.std,
                     "runs": list(self.null.phi_runs)},
            "config": self.config,
            "seconds": self.seconds,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _json_float(x: float):
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf" if x < 0 else "nan"


def build_null(d: Dataset, cfg: EstimatorConfig, repeats: int | None = None) -> NullModel:
    """Append an iid N(0, 1) column and estimate its Φ against the full set.

    The column is drawn from a stream derived from ``cfg.seed`` and exists
    only for the duration of the call.
    """
    R = cfg.repeats if repeats is None else repeats
    col_rng = np.random.default_rng(estimation._seed_seq(cfg, (TAG_NULL_COLUMN,)))
    aug = d.with_column(NULL_COLUMN, col_rng.standard_normal(d.n_rows))
    nm = aug.n_features - 1
    runs = estimation.phi_runs(aug, range(aug.n_features), nm, cfg, tag=TAG_NULL, repeats=R)
    if R == 1:
        log.warning("null model built from a single repeat; its spread is zero "
                    "and the inclusion test degenerates")
    return NullModel.from_runs(runs)


def include_test(phi: PhiEstimate, null: NullModel, alpha: float = 0.05) -> tuple[bool, float, bool]:
    """One-sided z-test of ``phi`` against the null Φ distribution.

    Returns ``(included, statistic, degenerate)``.  The statistic is the mean
    difference over the pooled standard error
    ``sqrt(std_phi**2 / R + std_null**2 / R)``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    R = len(phi.runs)
    if R != len(null.phi_runs):
        raise ValueError("feature and null estimates use different repeat counts")
    diff = phi.mean - null.mean
    se = math.sqrt(phi.std ** 2 / R + null.std ** 2 / R)
    if se == 0.0:
        stat = math.copysign(math.inf, diff) if diff != 0.0 else 0.0
        degenerate = True
    else:
        stat = diff / se
        degenerate = False
    return bool(stat > norm.ppf(1.0 - alpha)), stat, degenerate


def run_fsnid(d: Dataset, cfg: EstimatorConfig, order=None, alpha: float = 0.05,
              progress=None) -> SelectionReport:
    """Visit features in ``order`` and keep those that beat the null model.

    A feature that fails the test leaves the working set at once, so later
    Φ values are measured without it.  ``order`` is a permutation of column
    indices (default: column order).
    """
    if d.n_features < 1:
        raise SelectionError("dataset has no feature columns")
    if len(np.unique(d.labels)) < 2:
        raise SelectionError("the target has a single class; nothing to select for")
    order = list(range(d.n_features)) if order is None else [int(i) for i in order]
    if sorted(order) != list(range(d.n_features)):
        raise SelectionError("order must be a permutation of the feature indices")
    t0 = time.perf_counter()
    null = build_null(d, cfg)
    working = set(range(d.n_features))
    decisions = []
    calls = 0
    for i in order:
        phi = estimation.estimate_phi(d, sorted(working), i, cfg)
        calls += 1
        included, stat, degenerate = include_test(phi, null, alpha)
        if not included:
            working.discard(i)
        decisions.append(Decision(d.feature_names[i], i, phi, included, stat, degenerate))
        if progress is not None:
            progress(decisions[-1])
    config = dict(cfg.to_dict(), alpha=alpha, order=[d.feature_names[i] for i in order])
    return SelectionReport(decisions, null, config, time.perf_counter() - t0,
                           d.feature_names, phi_calls=calls)
