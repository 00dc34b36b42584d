"""NSL-KDD format support: a loader for the raw files and an offline stand-in.

The raw ``KDDTrain+.txt`` / ``KDDTest+.txt`` files have no header and 42 or
43 comma-separated fields: 41 features, the attack name, and optionally a
difficulty score.  Three features are nominal (protocol_type, service, flag)
and are label-encoded in order of first appearance.  Attack names collapse
to the four usual categories plus ``normal``, which is pinned to class 0.

``make_surrogate`` builds a dataset with the same 41 columns and class
structure from a generative model with planted relevant, redundant,
constant and irrelevant columns.  It is for exercising the pipeline where the
real files are unavailable; it says nothing about the real data.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .ingest import DataError, Dataset

FEATURES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
    "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
    "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
    "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
    "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
)
NOMINAL = ("protocol_type", "service", "flag")
CATEGORIES = ("normal", "DoS", "Probe", "R2L", "U2R")

_ATTACKS = {
    "DoS": "back land neptune pod smurf teardrop apache2 udpstorm processtable worm mailbomb",
    "Probe": "satan ipsweep nmap portsweep mscan saint",
    "R2L": "guess_passwd ftp_write imap phf multihop warezmaster warezclient spy xlock "
           "xsnoop snmpguess snmpgetattack httptunnel sendmail named",
    "U2R": "buffer_overflow loadmodule rootkit perl sqlattack xterm ps",
}
ATTACK_CATEGORY = {name: cat for cat, names in _ATTACKS.items() for name in names.split()}
ATTACK_CATEGORY["normal"] = "normal"


def load_nsl_kdd(path, max_rows: int | None = None) -> Dataset:
    """Read a raw NSL-KDD file, keeping the first ``max_rows`` records."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    nominal_idx = [FEATURES.index(c) for c in NOMINAL]
    codes = {i: {} for i in nominal_idx}
    rows, labels = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            if max_rows is not None and len(rows) >= max_rows:
                break
            if len(rec) not in (42, 43):
                raise DataError(f"{path}:{lineno}: expected 42 or 43 fields, got {len(rec)}")
            vals = []
            for j, cell in enumerate(rec[:41]):
                if j in codes:
                    vals.append(float(codes[j].setdefault(cell, len(codes[j]))))
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in {FEATURES[j]!r}"
                    ) from None
            name = rec[41].strip().rstrip(".")
            if name not in ATTACK_CATEGORY:
                raise DataError(f"{path}:{lineno}: unknown attack name {name!r}")
            rows.append(vals)
            labels.append(CATEGORIES.index(ATTACK_CATEGORY[name]))
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 records")
    return Dataset(FEATURES, np.array(rows), np.array(labels), CATEGORIES)


_CLASS_MIX = np.array([0.53, 0.36, 0.09, 0.016, 0.004])


def make_surrogate(rows: int = 5000, seed: int = 0) -> Dataset:
    """NSL-KDD-shaped data with known relevant and redundant columns.

    Class-dependent columns: flag, serror_rate, count, same_srv_rate,
    src_bytes, logged_in, hot, num_failed_logins, root_shell and
    rerror_rate.  Many others are noisy copies or transforms of these;
    num_outbound_cmds is constant and the rest are class-independent.
    """
    if rows < 10:
        raise ValueError("rows must be at least 10")
    rng = np.random.default_rng(seed)
    y = rng.choice(len(CATEGORIES), size=rows, p=_CLASS_MIX)
    dos, probe, r2l, u2r = (y == 1), (y == 2), (y == 3), (y == 4)
    col = {}

    def jitter(x, scale):
        return x + rng.normal(0.0, scale, rows)

    def clip01(x):
        return np.clip(x, 0.0, 1.0)

    # relevant
    col["flag"] = np.where(dos, rng.choice([1, 2], rows, p=[0.8, 0.2]),
                           np.where(probe, rng.choice([0, 3], rows), 0)).astype(float)
    col["serror_rate"] = clip01(np.where(dos, rng.beta(8, 2, rows), rng.beta(1, 20, rows)))
    col["count"] = np.round(np.where(dos, rng.gamma(9, 25, rows), rng.gamma(2, 5, rows)))
    col["same_srv_rate"] = clip01(np.where(probe, rng.beta(1, 6, rows), rng.beta(8, 1.5, rows)))
    col["src_bytes"] = np.round(np.exp(np.where(r2l, rng.normal(8, 1, rows),
                                                rng.normal(5, 1.5, rows))))
    col["logged_in"] = (rng.random(rows) < np.where(y == 0, 0.75, 0.1)).astype(float)
    col["hot"] = rng.poisson(np.where(r2l | u2r, 3.0, 0.1)).astype(float)
    col["num_failed_logins"] = rng.poisson(np.where(r2l, 0.8, 0.01)).astype(float)
    col["root_shell"] = (rng.random(rows) < np.where(u2r, 0.7, 0.002)).astype(float)
    col["rerror_rate"] = clip01(np.where(probe, rng.beta(3, 3, rows), rng.beta(1, 30, rows)))
    # redundant with the above
    col["srv_serror_rate"] = clip01(jitter(col["serror_rate"], 0.02))
    col["dst_host_serror_rate"] = clip01(jitter(col["serror_rate"], 0.05))
    col["dst_host_srv_serror_rate"] = clip01(jitter(col["serror_rate"], 0.05))
    col["srv_count"] = np.maximum(np.round(jitter(col["count"], 3.0)), 0)
    col["diff_srv_rate"] = clip01(jitter(1.0 - col["same_srv_rate"], 0.03))
    col["dst_host_same_srv_rate"] = clip01(jitter(col["same_srv_rate"], 0.05))
    col["dst_host_diff_srv_rate"] = clip01(jitter(col["diff_srv_rate"], 0.05))
    col["srv_rerror_rate"] = clip01(jitter(col["rerror_rate"], 0.02))
    col["dst_host_rerror_rate"] = clip01(jitter(col["rerror_rate"], 0.05))
    col["dst_host_srv_rerror_rate"] = clip01(jitter(col["rerror_rate"], 0.05))
    col["dst_bytes"] = np.round(col["src_bytes"] * rng.lognormal(0.0, 0.3, rows))
    col["num_compromised"] = np.round(col["hot"] * rng.random(rows))
    col["num_root"] = col["root_shell"] * rng.poisson(2.0, rows)
    col["num_file_creations"] = col["root_shell"] * rng.poisson(1.0, rows)
    # constant, as in the public training file
    col["num_outbound_cmds"] = np.zeros(rows)
    # class-independent
    col["duration"] = np.round(rng.exponential(1.0, rows) * (rng.random(rows) < 0.1) * 300)
    col["protocol_type"] = rng.choice(3, rows, p=[0.8, 0.15, 0.05]).astype(float)
    col["service"] = rng.integers(0, 16, rows).astype(float)
    col["land"] = (rng.random(rows) < 0.001).astype(float)
    col["wrong_fragment"] = rng.poisson(0.02, rows).astype(float)
    col["urgent"] = (rng.random(rows) < 0.001).astype(float)
    col["su_attempted"] = (rng.random(rows) < 0.002).astype(float)
    col["num_shells"] = (rng.random(rows) < 0.003).astype(float)
    col["num_access_files"] = rng.poisson(0.01, rows).astype(float)
    col["is_host_login"] = (rng.random(rows) < 0.001).astype(float)
    col["is_guest_login"] = (rng.random(rows) < 0.01).astype(float)
    col["srv_diff_host_rate"] = rng.beta(1, 8, rows)
    col["dst_host_count"] = np.round(rng.uniform(0, 255, rows))
    col["dst_host_srv_count"] = np.round(rng.uniform(0, 255, rows))
    col["dst_host_same_src_port_rate"] = rng.beta(1, 5, rows)
    col["dst_host_srv_diff_host_rate"] = rng.beta(1, 10, rows)
    assert set(col) == set(FEATURES)
    X = np.column_stack([col[name] for name in FEATURES])
    return Dataset(FEATURES, X, y, CATEGORIES)
