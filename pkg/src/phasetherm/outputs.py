"""File formats.

stats.csv / markov.csv share one long format with header
``time,mu,mean,var,n``.  Floats are written with ``repr`` so a read-back is
bit-exact.  markov.csv appends the steady state as rows with ``time=inf``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

STATS_HEADER = ["time", "mu", "mean", "var", "n"]
TRAJECTORY_HEADER = ["time", "mu", "P", "d0", "energy"]
DISTANCES_HEADER = ["time", "tv_exact_markov", "tv_exact_gibbs", "tv_single_gibbs"]
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    pass


def _f(x) -> str:
    return repr(float(x))


def write_long(path, times, mean, var=None, n: int = 1, steady=None) -> None:
    mean = np.asarray(mean, dtype=float)
    var = np.zeros_like(mean) if var is None else np.asarray(var, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for i, t in enumerate(times):
            for mu in range(mean.shape[1]):
                w.writerow([_f(t), mu, _f(mean[i, mu]), _f(var[i, mu]), n])
        if steady is not None:
            for mu, p in enumerate(steady):
                w.writerow(["inf", mu, _f(p), _f(0.0), n])


def read_long(path) -> dict:
    """Parse the long format into times, mean, var, n and (if present) steady."""
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != STATS_HEADER:
                raise FormatError(f"{path}: expected header {','.join(STATS_HEADER)}, got {header}")
            for line, row in enumerate(reader, start=2):
                if len(row) != 5:
                    raise FormatError(f"{path}:{line}: expected 5 fields")
                rows.append((float(row[0]), int(row[1]), float(row[2]), float(row[3]), int(row[4])))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    finite = [r for r in rows if math.isfinite(r[0])]
    steady_rows = [r for r in rows if math.isinf(r[0])]
    d_S = max(r[1] for r in rows) + 1
    if len(finite) % d_S:
        raise FormatError(f"{path}: row count not a multiple of d_S={d_S}")
    n_t = len(finite) // d_S
    times = np.empty(n_t)
    mean = np.empty((n_t, d_S))
    var = np.empty((n_t, d_S))
    for i in range(n_t):
        block = finite[i * d_S:(i + 1) * d_S]
        if [r[1] for r in block] != list(range(d_S)) or len({r[0] for r in block}) != 1:
            raise FormatError(f"{path}: rows for grid time {i} are not mu = 0..{d_S - 1}")
        times[i] = block[0][0]
        mean[i] = [r[2] for r in block]
        var[i] = [r[3] for r in block]
    steady = None
    if steady_rows:
        if [r[1] for r in steady_rows] != list(range(d_S)):
            raise FormatError(f"{path}: steady-state rows malformed")
        steady = np.array([r[2] for r in steady_rows])
    return {"times": times, "mean": mean, "var": var, "n": finite[0][4], "d_S": d_S, "steady": steady}


def write_trajectory(path, times, P, d0, energy) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for i, t in enumerate(times):
            for mu in range(P.shape[1]):
                w.writerow([_f(t), mu, _f(P[i, mu]), _f(d0[i]), _f(energy[i])])


def write_distances(path, times, columns: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DISTANCES_HEADER)
        for i, t in enumerate(times):
            w.writerow([_f(t)] + [_f(columns[k][i]) for k in DISTANCES_HEADER[1:]])


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_checkpoint(path, states: np.ndarray, times, seeds) -> None:
    np.savez(path, version=np.int64(CHECKPOINT_VERSION), states=states,
             time=np.float64(times[-1]), seeds=np.array([str(s) for s in seeds]))


def read_checkpoint(path) -> dict:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        return {"states": data["states"], "time": float(data["time"]),
                "seeds": [int(s) for s in data["seeds"]]}


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory: Path, names) -> None:
    entries = {name: {"sha256": sha256(directory / name), "bytes": (directory / name).stat().st_size}
               for name in sorted(names)}
    (directory / "manifest.json").write_text(dump_json({"files": entries}))
