"""CSV and JSON serialisation of experiment outputs.

Floats are written with 17 significant digits so that a reload reproduces
the stored double exactly. Discrete configurations are written as their
labels joined by ``-`` (for example ``1-4-2``).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .discretization import enumerate_states


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def state_key(state) -> str:
    return "-".join(str(int(s)) for s in state)


def parse_state(key: str) -> np.ndarray:
    return np.array([int(s) for s in key.split("-")], dtype=np.int64)


def _writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh)


def write_marginal_csv(path, table: np.ndarray, q: int):
    """Columns: state, probability."""
    n = table.ndim
    fh, w = _writer(path)
    with fh:
        w.writerow(["state", "probability"])
        for st, p in zip(enumerate_states(n, q), table.reshape(-1)):
            w.writerow([state_key(st), fmt(p)])


def read_marginal_csv(path) -> dict:
    with open(path, newline="") as fh:
        return {row["state"]: float(row["probability"]) for row in csv.DictReader(fh)}


def write_rates_csv(path, rows):
    """Columns: state, site, method, value, stderr, samples.

    ``rows`` yields (state, site, RateEstimate).
    """
    fh, w = _writer(path)
    with fh:
        w.writerow(["state", "site", "method", "value", "stderr", "samples"])
        for state, site, est in rows:
            w.writerow([state_key(state), int(site), est.method, fmt(est.value),
                        fmt(est.stderr), int(est.samples)])


def write_trajectory_csv(path, events):
    """Columns: time, site, old_label, new_label, event_kind."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["time", "site", "old_label", "new_label", "event_kind"])
        for ev in events:
            w.writerow([fmt(ev.time), ev.site, ev.old_label, ev.new_label, ev.kind])


def write_snapshots_csv(path, times, snapshots):
    """Columns: time, then label_0 .. label_{N-1}."""
    snapshots = np.asarray(snapshots)
    fh, w = _writer(path)
    with fh:
        w.writerow(["time"] + [f"label_{i}" for i in range(snapshots.shape[1])])
        for t, row in zip(times, snapshots):
            w.writerow([fmt(t)] + [int(v) for v in row])


def write_series_csv(path, columns: dict):
    """Equal-length named columns, one row per index."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    fh, w = _writer(path)
    with fh:
        w.writerow(names)
        for row in zip(*data):
            w.writerow([fmt(v) for v in row])


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
