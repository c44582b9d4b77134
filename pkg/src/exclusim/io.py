"""Trajectory CSV files and their JSON manifests.

One consolidated CSV per grid point holds every replica, columns
``t, X_1..X_d, A_1..A_d, J[y]..., replica, seed``. Floats are written with
``repr`` so values round-trip exactly. ``<stem>.manifest.json`` records the
code version, master seed, a hash of the parameters and per-replica seeds.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dynamics import Trajectory, support_columns
from .errors import ExclusimError, ParameterMismatch
from .stats import Ensemble


def config_hash(params: dict) -> str:
    canonical = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def columns(d: int, kernel_columns: Sequence[str]) -> list[str]:
    return (["t"] + [f"X_{i + 1}" for i in range(d)] + [f"A_{i + 1}" for i in range(d)]
            + list(kernel_columns) + ["replica", "seed"])


def write_trajectories(stem: Path, trajectories: Sequence[Trajectory], master_seed: int) -> tuple[Path, Path]:
    """Write ``stem.csv`` and ``stem.manifest.json``; return both paths."""
    if not trajectories:
        raise ExclusimError("nothing to write")
    stem = Path(stem)
    config = trajectories[0].config
    params = config.params()
    header = columns(config.torus.d, support_columns(config.kernel))
    csv_path = stem.with_name(stem.name + ".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for tr in trajectories:
            if tr.config.params() != params:
                raise ParameterMismatch("trajectories in one file must share parameters")
            for i, t in enumerate(tr.times):
                writer.writerow([repr(float(t)), *(str(int(v)) for v in tr.X[i]),
                                 *(repr(float(v)) for v in tr.A[i]), *(str(int(v)) for v in tr.J[i]),
                                 str(tr.replica), str(tr.seed)])
    manifest = {
        "code_version": __version__,
        "config_hash": config_hash(params),
        "master_seed": int(master_seed),
        "params": params,
        "replicas": [{"replica": tr.replica, "seed": tr.seed, "events": tr.events} for tr in trajectories],
        "columns": header,
        "data": csv_path.name,
    }
    manifest_path = stem.with_name(stem.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return csv_path, manifest_path


def manifest_for(csv_path: Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.name[: -len(".csv")] + ".manifest.json")


def read_manifest(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def read_ensemble(csv_path: Path) -> Ensemble:
    """Load one trajectory CSV, checking it against its manifest."""
    csv_path = Path(csv_path)
    manifest = read_manifest(manifest_for(csv_path))
    params = manifest["params"]
    if config_hash(params) != manifest["config_hash"]:
        raise ExclusimError(f"{csv_path}: manifest hash does not match its parameters")
    d = params["d"]
    m = len(params["kernel"])
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != manifest["columns"]:
            raise ExclusimError(f"{csv_path}: header disagrees with manifest")
        rows = list(reader)
    table = np.array(rows, dtype=object)
    S = len(params["samples"])
    n = len(manifest["replicas"])
    if table.shape[0] != n * S:
        raise ExclusimError(f"{csv_path}: expected {n * S} rows, found {table.shape[0]}")
    table = table.reshape(n, S, -1)
    return Ensemble(
        times=table[0, :, 0].astype(float),
        X=table[:, :, 1:1 + d].astype(np.int64),
        A=table[:, :, 1 + d:1 + 2 * d].astype(float),
        J=table[:, :, 1 + 2 * d:1 + 2 * d + m].astype(np.int64),
        seeds=table[:, 0, -1].astype(np.uint64),
        replicas=table[:, 0, -2].astype(np.int64),
        params=params,
    )


def combine(ensembles: Sequence[Ensemble]) -> Ensemble:
    """Concatenate ensembles with identical parameters (ordered by replica id)."""
    first = ensembles[0]
    for ens in ensembles[1:]:
        if ens.params != first.params:
            diff = sorted(k for k in first.params if first.params[k] != ens.params.get(k))
            raise ParameterMismatch(f"inputs disagree on {', '.join(diff)}")
    if len(ensembles) == 1:
        return first
    merged = Ensemble(first.times, np.concatenate([e.X for e in ensembles]),
                      np.concatenate([e.A for e in ensembles]), np.concatenate([e.J for e in ensembles]),
                      np.concatenate([e.seeds for e in ensembles]),
                      np.concatenate([e.replicas for e in ensembles]), dict(first.params))
    return merged.take(np.argsort(merged.replicas, kind="stable"))
