import numpy as np
import pytest

from fsnid import acceptance
from fsnid.acceptance import ALL, SUITES, UnknownSuite, checks, run_acceptance
from fsnid.ingest import normalize
from fsnid.nslkdd import CATEGORIES, FEATURES, make_surrogate


def test_every_criterion_has_exactly_one_check():
    nums = sorted(c["criterion"] for c in checks(ALL))
    assert nums == list(range(1, 11))


def test_suite_files_are_well_formed():
    assert {"estimator-suite", "lemma-suite", "temporal-suite", "scaling-suite",
            "real-data-suite", "determinism-suite"} <= set(SUITES)
    for spec in SUITES.values():
        for c in spec["checks"]:
            assert c["runner"] in acceptance.RUNNERS
            assert {"criterion", "name", "params", "tolerances"} <= set(c)


def test_unknown_suite():
    with pytest.raises(UnknownSuite, match="lemma-suite"):
        run_acceptance("nope")


def test_summary_shape(monkeypatch):
    monkeypatch.setitem(acceptance.RUNNERS, "gradients",
                        lambda p, t, ctx: (True, "stub", {"x": 1}))
    lines = []
    monkeypatch.setitem(acceptance.RUNNERS, "mi_fidelity",
                        lambda p, t, ctx: (False, "stub", {}))
    out = run_acceptance("estimator-suite", echo=lines.append)
    assert out["passed"] is False
    assert [c["criterion"] for c in out["checks"]] == [1, 8]
    assert lines[0].startswith("[FAIL] C1") and lines[1].startswith("[PASS] C8")


def test_surrogate_shape():
    d = make_surrogate(rows=2000, seed=1)
    assert d.n_features == 41 and d.feature_names == FEATURES
    assert d.class_names == CATEGORIES
    assert set(np.unique(d.labels)) == set(range(5))
    assert "num_outbound_cmds" in normalize(d).constant_columns


def test_surrogate_seeded():
    a, b = make_surrogate(rows=100, seed=3), make_surrogate(rows=100, seed=3)
    np.testing.assert_array_equal(a.features, b.features)
