"""Acceptance checks run from declarative suite files.

Each suite in ``suites/*.json`` lists checks by criterion number, the runner
that executes them, and the parameters and tolerances for that runner.  A
shared :class:`Context` caches selection reports so later checks (subset
sufficiency, determinism) reuse earlier runs instead of repeating them.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .approximator import (
    DenseParams,
    RecurrentParams,
    dense_backward,
    dense_forward,
    recurrent_backward,
    recurrent_forward,
)
from .bench import run_bench
from .classify import ClassifierConfig, evaluate, train_classifier, train_sequence_classifier
from .estimation import EstimatorConfig, estimate_mi
from .ingest import Dataset, normalize, normalize_split, split
from .nslkdd import load_nsl_kdd, make_surrogate
from .selection import SelectionReport, run_fsnid
from .synthetic import SyntheticSpec, generate, plugin_mi

SUITE_DIR = "suites"
ALL = "all"


class UnknownSuite(KeyError):
    pass


def _suite_files() -> dict[str, dict]:
    out = {}
    for entry in resources.files(__package__).joinpath(SUITE_DIR).iterdir():
        if entry.name.endswith(".json"):
            spec = json.loads(entry.read_text())
            out[spec["name"]] = spec
    return dict(sorted(out.items(), key=lambda kv: min(c["criterion"] for c in kv[1]["checks"])))


SUITES = _suite_files()


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    summary: str
    seconds: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] C{self.criterion} {self.name}: {self.summary} ({self.seconds:.0f}s)"

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "name": self.name, "passed": self.passed,
                "summary": self.summary, "seconds": self.seconds, "details": self.details}


@dataclass
class Context:
    """Results shared between checks in one process."""

    reports: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)
    datasets: dict = field(default_factory=dict)

    def dataset(self, kind: str, noise: int, rows: int, seed: int) -> tuple[Dataset, object]:
        key = (kind, noise, rows, seed)
        if key not in self.datasets:
            self.datasets[key] = generate(SyntheticSpec(kind, rows=rows,
                                                        noise_features=noise, seed=seed))
        return self.datasets[key]

    def selection(self, key, d: Dataset, cfg: EstimatorConfig, order=None) -> SelectionReport:
        if key not in self.reports:
            self.reports[key] = run_fsnid(normalize(d), cfg, order=order)
        return self.reports[key]


def _estimator(overrides: dict | None, seed: int) -> EstimatorConfig:
    return EstimatorConfig(**{**(overrides or {}), "seed": seed, "jobs": 1})


def _fraction(hits: int, total: int) -> str:
    return f"{hits}/{total}"


def _stable(report: SelectionReport) -> str:
    d = report.to_dict()
    d.pop("seconds", None)
    return json.dumps(d, sort_keys=True)


# ----------------------------------------------------------------------------- runners


def run_mi_fidelity(p: dict, t: dict, ctx: Context) -> tuple[bool, str, dict]:
    values, times, oracle = [], [], []
    for s in range(p["seeds"]):
        d, _ = ctx.dataset(p["kind"], 0, p["rows"], p["data_seed"] + s)
        t0 = time.perf_counter()
        est = estimate_mi(normalize(d), [0], _estimator(p.get("estimator"), s))
        times.append(time.perf_counter() - t0)
        ctx.estimates[("mi", s)] = est.raw
        values.append(est.value)
        oracle.append(plugin_mi(d, [0]))
    lo, hi = t["range"]
    hits = sum(lo <= v <= hi for v in values)
    ok = hits >= t["min_in_range"] and max(times) <= t["max_seconds_each"]
    summary = (f"{_fraction(hits, len(values))} estimates in [{lo}, {hi}] "
               f"(min {min(values):.3f}, max {max(values):.3f}; plug-in {np.mean(oracle):.3f}); "
               f"slowest {max(times):.1f}s")
    return ok, summary, {"values": values, "seconds": times, "plugin": oracle}


def _selection_runs(p: dict, ctx: Context, order_name: str = "forward"):
    out = []
    for r in range(p["runs"]):
        d, ann = ctx.dataset(p["kind"], p["noise"], p["rows"], p["data_seed"] + r)
        order = None if order_name == "forward" else list(range(d.n_features))[::-1]
        key = (p["kind"], p["noise"], p["rows"], r, order_name,
               json.dumps(p.get("estimator") or {}, sort_keys=True))
        out.append((d, ann, ctx.selection(key, d, _estimator(p.get("estimator"), r), order)))
    return out


def run_irrelevance(p: dict, t: dict, ctx: Context):
    runs = _selection_runs(p, ctx)
    empty = sum(not rep.selected for _, _, rep in runs)
    secs = [rep.seconds for _, _, rep in runs]
    need = math.ceil(t["min_fraction"] * len(runs))
    ok = empty >= need and sum(secs) <= t["max_seconds_total"]
    picked = [rep.selected_names for _, _, rep in runs]
    return ok, (f"{_fraction(empty, len(runs))} runs selected nothing (need {need}), "
                f"picked {[n for n in picked if n]}; {sum(secs):.0f}s in total"), {
        "selected": picked, "seconds": secs}


def run_redundancy(p: dict, t: dict, ctx: Context):
    ok, parts, details = True, [], {}
    for order_name in p["orders"]:
        runs = _selection_runs(p, ctx, order_name)
        one, oracle_ok, picked = 0, True, []
        for d, _, rep in runs:
            names = set(rep.selected_names)
            picked.append(sorted(names))
            if len(names & {"x1", "x2"}) == 1:
                one += 1
                gap = plugin_mi(d, list(range(d.n_features))) - plugin_mi(d, rep.selected)
                oracle_ok &= gap <= t["max_mi_gap"]
        need = math.ceil(t["min_fraction"] * len(runs))
        ok &= one >= need and oracle_ok
        parts.append(f"{order_name}: {_fraction(one, len(runs))} kept exactly one copy")
        details[order_name] = picked
    return ok, "; ".join(parts), details


def run_synergy(p: dict, t: dict, ctx: Context):
    runs = _selection_runs(p, ctx)
    exact, phi_ok, phis = 0, 0, []
    lo, hi = t["phi_range"]
    for _, _, rep in runs:
        exact += rep.selected_names == ["x1", "x2"]
        vals = {x.name: x.phi.value for x in rep.decisions if x.name in ("x1", "x2")}
        phis.append(vals)
        phi_ok += all(lo <= v <= hi for v in vals.values())
    secs = [rep.seconds for _, _, rep in runs]
    need = math.ceil(t["min_fraction"] * len(runs))
    ok = exact >= need and phi_ok >= need and sum(secs) <= t["max_seconds_total"]
    return ok, (f"{_fraction(exact, len(runs))} selected exactly {{x1, x2}}, "
                f"{_fraction(phi_ok, len(runs))} with both Φ in [{lo}, {hi}]; "
                f"{sum(secs):.0f}s in total"), {"phi": phis, "seconds": secs}


def run_temporal(p: dict, t: dict, ctx: Context):
    static_p = dict(p, estimator=p["static_estimator"])
    temporal_p = dict(p, estimator=p["temporal_estimator"])
    static = _selection_runs(static_p, ctx)
    temporal = _selection_runs(temporal_p, ctx)
    hits = sum("x1" not in s.selected_names and "x1" in tm.selected_names
               for (_, _, s), (_, _, tm) in zip(static, temporal))
    need = math.ceil(t["min_fraction"] * p["runs"])

    ccfg = ClassifierConfig(**p["classifier"])
    seq_acc, dense_acc = [], []
    for r in range(p["classifier_runs"]):
        d, _ = ctx.dataset(p["kind"], p["noise"], p["rows"], p["data_seed"] + r)
        parts = normalize_split(split(d, p["split"]))
        cfg_r = replace(ccfg, seed=r)
        seq = train_sequence_classifier(parts.train, ["x1"], p["seq_len"], cfg_r)
        seq_acc.append(evaluate(seq, parts.test).accuracy)
        dense = train_classifier(parts.train, ["x1"], cfg_r)
        dense_acc.append(evaluate(dense, parts.test).accuracy)
    cls_ok = min(seq_acc, default=1.0) >= t["min_sequence_accuracy"] and \
        max(dense_acc, default=0.0) <= t["max_dense_accuracy"]
    ok = hits >= need and cls_ok
    summary = f"{_fraction(hits, p['runs'])} runs: static missed x1 and temporal kept it " \
              f"(need {need})"
    if seq_acc:
        summary += f"; sequence accuracy min {min(seq_acc):.3f}, dense max {max(dense_acc):.3f}"
    return ok, summary, {
        "static": [s.selected_names for _, _, s in static],
        "temporal": [tm.selected_names for _, _, tm in temporal],
        "temporal_phi": [[x.phi.mean for x in tm.decisions] for _, _, tm in temporal],
        "sequence_accuracy": seq_acc, "dense_accuracy": dense_acc}


def _subset_gap(d: Dataset, selected: list[int], p: dict,
                seq_len: int | None = None) -> tuple[float, float]:
    """Test accuracy with all columns and with ``selected`` only."""
    parts = normalize_split(split(d, p["split"]))
    ccfg = ClassifierConfig(**p.get("classifier", {}))

    def acc(cols):
        if seq_len is None:
            return evaluate(train_classifier(parts.train, cols, ccfg), parts.test).accuracy
        model = train_sequence_classifier(parts.train, cols, seq_len, ccfg)
        return evaluate(model, parts.test).accuracy

    everything = list(range(d.n_features))
    full = acc(everything)
    if not selected:
        return full, float(np.bincount(parts.test.labels).max() / parts.test.n_rows)
    # same columns and seed give the same model
    return full, full if list(selected) == everything else acc(selected)


def run_sufficiency(p: dict, t: dict, ctx: Context):
    ok, parts, details = True, [], {}
    for case in p["cases"]:
        q = dict(case, runs=1, estimator=case.get("estimator"))
        (d, _, rep), = _selection_runs(q, ctx)
        full, sub = _subset_gap(d, rep.selected, dict(p, **case), case.get("seq_len"))
        good = bool(rep.selected) and abs(full - sub) <= t["max_accuracy_gap"]
        ok &= good
        parts.append(f"{case['kind']} {rep.selected_names}: {sub:.3f} vs {full:.3f}")
        details[case["kind"]] = {"selected": rep.selected_names, "subset": sub, "full": full}
    return ok, "; ".join(parts), details


def run_scaling(p: dict, t: dict, ctx: Context):
    cfg = EstimatorConfig(**p["estimator"])
    t0 = time.perf_counter()
    res = run_bench(p["counts"], cfg, rows=p["rows"])
    elapsed = time.perf_counter() - t0
    a, b = t["ratio_of"]
    ratio = res.ratio(a, b)
    lo, hi = t["ratio_range"]
    calls_ok = all(pt.phi_calls == pt.feature_count for pt in res.points)
    ok = (res.r_squared >= t["min_r_squared"] and lo <= ratio <= hi and calls_ok
          and elapsed <= t["max_seconds"])
    return ok, (f"r^2 {res.r_squared:.3f} (need {t['min_r_squared']}), "
                f"t({a})/t({b}) = {ratio:.2f} (need [{lo}, {hi}]), "
                f"Φ calls match counts: {calls_ok}"), res.to_dict()


def _fd_check(forward, backward, params, x, upstream, h: float) -> float:
    grads = backward(params, x, upstream)
    worst = 0.0
    for p, g in zip(params.arrays(), grads.arrays()):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + h
            up = float(np.sum(upstream * forward(params, x)))
            flat[k] = keep - h
            down = float(np.sum(upstream * forward(params, x)))
            flat[k] = keep
            num = (up - down) / (2 * h)
            den = max(abs(num), abs(gflat[k]), 1e-6)
            worst = max(worst, abs(num - gflat[k]) / den)
    return worst


def run_gradients(p: dict, t: dict, ctx: Context):
    rng = np.random.default_rng(p["seed"])
    t0 = time.perf_counter()
    dense, rec = [], []
    for _ in range(p["draws"]):
        d_in = int(rng.integers(1, 6))
        params = DenseParams.init(d_in, rng, hidden=p["dense_hidden"])
        x = rng.normal(size=(p["batch"], d_in))
        dense.append(_fd_check(dense_forward, dense_backward, params, x,
                               rng.normal(size=p["batch"]), p["step"]))
    for _ in range(p["draws"]):
        d_in = int(rng.integers(1, 4))
        params = RecurrentParams.init(d_in, rng, hidden=p["recurrent_hidden"])
        x = rng.normal(size=(p["batch"], p["seq_len"], d_in))
        rec.append(_fd_check(recurrent_forward, recurrent_backward, params, x,
                             rng.normal(size=p["batch"]), p["step"]))
    elapsed = time.perf_counter() - t0
    ok = (max(dense) <= t["dense_rel_error"] and max(rec) <= t["recurrent_rel_error"]
          and elapsed <= t["max_seconds"])
    return ok, (f"worst relative error dense {max(dense):.1e} (<= {t['dense_rel_error']}), "
                f"recurrent {max(rec):.1e} (<= {t['recurrent_rel_error']})"), {
        "dense": dense, "recurrent": rec, "seconds": elapsed}


def _real_data(p: dict) -> tuple[Dataset, str]:
    path = os.environ.get(p["path_env"])
    if path and Path(path).is_file():
        return load_nsl_kdd(path, max_rows=p["rows"]), f"file {path}"
    return make_surrogate(rows=p["rows"], seed=p["seed"]), "offline surrogate"


def run_real_data(p: dict, t: dict, ctx: Context):
    d, source = _real_data(p)
    rep = ctx.selection(("real", source, p["rows"]), d, _estimator(p.get("estimator"), p["seed"]))
    k = len(rep.selected)
    full, sub = _subset_gap(d, rep.selected, p)
    ok = (1 <= k < d.n_features and abs(full - sub) <= t["max_accuracy_gap"]
          and rep.seconds <= t["max_seconds"])
    return ok, (f"{source}: kept {k} of {d.n_features}; accuracy {sub:.3f} on the subset vs "
                f"{full:.3f} on all; selection took {rep.seconds:.0f}s"), {
        "selected": rep.selected_names, "subset": sub, "full": full, "seconds": rep.seconds}


def run_determinism(p: dict, t: dict, ctx: Context):
    """Repeat one run per earlier criterion in a fresh context and compare output."""
    mismatches, checked = [], 0
    for item in p["reruns"]:
        fresh = Context()
        runner = RUNNERS[item["runner"]]
        q = dict(item["params"], runs=1, seeds=1, classifier_runs=0)
        for c in (ctx, fresh):
            if not _has_cached(c, item):
                runner(q, _LENIENT, c)
        for key in _keys_for(item, fresh):
            checked += 1
            a, b = _lookup(ctx, key), _lookup(fresh, key)
            if a != b:
                mismatches.append(str(key[:2]))
    ok = checked > 0 and not mismatches
    return ok, (f"{checked} reruns compared byte for byte, "
                f"{len(mismatches)} differed{': ' + ', '.join(mismatches) if mismatches else ''}"), {
        "mismatches": mismatches}


_LENIENT = {"range": [-1e9, 1e9], "min_in_range": 0, "max_seconds_each": 1e9,
            "max_seconds_total": 1e9,
            "min_fraction": 0.0, "max_mi_gap": 1e9, "phi_range": [-1e9, 1e9],
            "min_sequence_accuracy": 0.0, "max_dense_accuracy": 1.0}


def _has_cached(ctx: Context, item) -> bool:
    keys = _keys_for(item, ctx)
    return bool(keys) and all(_lookup(ctx, k) is not None for k in keys)


def _keys_for(item, ctx: Context):
    p = item["params"]
    if item["runner"] == "mi_fidelity":
        return [("mi", 0)]
    ests = [p.get("estimator")] if "estimator" in p else \
        [p["static_estimator"], p["temporal_estimator"]]
    orders = p.get("orders", ["forward"])
    return [(p["kind"], p["noise"], p["rows"], 0, o, json.dumps(e or {}, sort_keys=True))
            for e in ests for o in orders]


def _lookup(ctx: Context, key):
    if key[0] == "mi":
        v = ctx.estimates.get(key)
        return None if v is None else float(v).hex()
    rep = ctx.reports.get(key)
    return None if rep is None else _stable(rep)


RUNNERS = {
    "mi_fidelity": run_mi_fidelity,
    "irrelevance": run_irrelevance,
    "redundancy": run_redundancy,
    "synergy": run_synergy,
    "temporal": run_temporal,
    "sufficiency": run_sufficiency,
    "scaling": run_scaling,
    "gradients": run_gradients,
    "real_data": run_real_data,
    "determinism": run_determinism,
}


# ----------------------------------------------------------------------------- driver


def checks(suite: str) -> list[dict]:
    if suite == ALL:
        out = [c for s in SUITES.values() for c in s["checks"]]
        return sorted(out, key=lambda c: c["criterion"])
    if suite not in SUITES:
        raise UnknownSuite(f"unknown suite {suite!r}; choose from {[*SUITES, ALL]}")
    return list(SUITES[suite]["checks"])


def find_check(criterion: int) -> dict:
    for c in checks(ALL):
        if c["criterion"] == criterion:
            return c
    raise UnknownSuite(f"no check for criterion {criterion}")


def run_check(check: dict, ctx: Context | None = None) -> CheckResult:
    ctx = Context() if ctx is None else ctx
    t0 = time.perf_counter()
    ok, summary, details = RUNNERS[check["runner"]](check["params"], check["tolerances"], ctx)
    return CheckResult(check["criterion"], check["name"], bool(ok), summary,
                       time.perf_counter() - t0, details)


def run_acceptance(suite: str, echo=print, ctx: Context | None = None) -> dict:
    """Run every check in ``suite`` (or ``"all"``) and return a JSON-ready summary."""
    ctx = Context() if ctx is None else ctx
    results = []
    for check in checks(suite):
        res = run_check(check, ctx)
        results.append(res)
        if echo is not None:
            echo(res.line())
    return {"suite": suite, "passed": all(r.passed for r in results),
            "checks": [r.to_dict() for r in results]}
