"""On-disk formats: LMDP and basis JSON, stack directories, CSV tables.

All writers are deterministic: floats render with 17 significant digits
(%.17g, enough to round-trip a double), JSON keys are sorted, newlines are
always "\\n".  Rerunning a writer on equal inputs produces byte-identical
files.
"""
from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
import scipy
import scipy.sparse as sp

from .core import (Desirability, Lmdp, PassiveDynamics, RewardModel,
                   StatePartition, build_lmdp)
from .errors import InvalidSpec
from .hierarchy import AugmentedMlmdp, HierarchyStack
from .multitask import TaskBasis, TaskWeights


def fmt(x) -> str:
    """Canonical float rendering used by every CSV column."""
    return "%.17g" % float(x)


def _matrix_triples(matrix: sp.csc_matrix) -> List[list]:
    """(source, destination, probability) triples, sorted by source then dest."""
    M = matrix.tocsc(copy=True)
    M.sort_indices()
    out = []
    for src in range(M.shape[1]):
        lo, hi = M.indptr[src], M.indptr[src + 1]
        for dst, p in zip(M.indices[lo:hi].tolist(), M.data[lo:hi].tolist()):
            out.append([src, dst, p])
    return out


# ---------------------------------------------------------------------------
# LMDP documents


def lmdp_to_dict(lmdp: Lmdp) -> dict:
    """JSON-ready description: sizes, temperature, rewards, passive triples.

    Triples use global destination indices (boundary rows start at
    n_interior) and are sorted by source then destination.
    """
    doc = {
        "n_interior": lmdp.n_interior,
        "n_boundary": lmdp.n_boundary,
        "lambda": float(lmdp.rewards.temperature),
        "r_i": [float(v) for v in lmdp.rewards.interior],
        "r_b": [float(v) for v in lmdp.rewards.boundary],
        "passive": _matrix_triples(lmdp.passive.full_matrix),
    }
    if lmdp.partition.labels is not None:
        doc["labels"] = list(lmdp.partition.labels)
    return doc


def lmdp_from_dict(doc: dict) -> Lmdp:
    """Rebuild an LMDP from its document; validation runs as usual."""
    try:
        n_i = int(doc["n_interior"])
        n_b = int(doc["n_boundary"])
        lam = float(doc["lambda"])
        r_i = np.asarray(doc["r_i"], dtype=np.float64)
        r_b = np.asarray(doc["r_b"], dtype=np.float64)
        triples = doc["passive"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"malformed LMDP document: {exc}") from exc
    labels = tuple(doc["labels"]) if "labels" in doc else None
    rows_i, cols_i, vals_i = [], [], []
    rows_b, cols_b, vals_b = [], [], []
    for entry in triples:
        src, dst, p = int(entry[0]), int(entry[1]), float(entry[2])
        if not (0 <= src < n_i and 0 <= dst < n_i + n_b):
            raise InvalidSpec(f"passive triple {entry} out of range")
        if dst < n_i:
            rows_i.append(dst)
            cols_i.append(src)
            vals_i.append(p)
        else:
            rows_b.append(dst - n_i)
            cols_b.append(src)
            vals_b.append(p)
    to_interior = sp.csc_matrix((vals_i, (rows_i, cols_i)), shape=(n_i, n_i))
    to_boundary = sp.csc_matrix((vals_b, (rows_b, cols_b)), shape=(n_b, n_i))
    partition = StatePartition(n_i, n_b, labels)
    passive = PassiveDynamics(to_interior, to_boundary)
    return build_lmdp(partition, passive, RewardModel(r_i, r_b, lam))


# ---------------------------------------------------------------------------
# basis documents


def basis_to_dict(basis: TaskBasis) -> dict:
    return {
        "lmdp": lmdp_to_dict(basis.base),
        "boundary_tasks": [[float(v) for v in row]
                           for row in basis.boundary_tasks],
        "desirabilities": [[float(v) for v in row]
                           for row in basis.desirabilities],
    }


def basis_from_dict(doc: dict) -> TaskBasis:
    try:
        lmdp = lmdp_from_dict(doc["lmdp"])
        Q = np.asarray(doc["boundary_tasks"], dtype=np.float64)
        Z = np.asarray(doc["desirabilities"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"malformed basis document: {exc}") from exc
    if Q.ndim != 2 or Q.shape[0] != lmdp.n_boundary:
        raise InvalidSpec(f"boundary task matrix shape {Q.shape} does not "
                          f"match {lmdp.n_boundary} boundary states")
    if Z.shape != (lmdp.n_interior, Q.shape[1]):
        raise InvalidSpec(f"desirability matrix shape {Z.shape}, expected "
                          f"{(lmdp.n_interior, Q.shape[1])}")
    return TaskBasis(lmdp, Q, Z)


# ---------------------------------------------------------------------------
# JSON and text IO


def write_json(path, doc: dict) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2)
    save_text(path, text + "\n")


def read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def save_lmdp(path, lmdp: Lmdp) -> None:
    write_json(path, lmdp_to_dict(lmdp))


def load_lmdp(path) -> Lmdp:
    return lmdp_from_dict(read_json(path))


def save_basis(path, basis: TaskBasis) -> None:
    write_json(path, basis_to_dict(basis))


def load_basis(path) -> TaskBasis:
    return basis_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# stack directories


def save_stack(stack: HierarchyStack, directory) -> None:
    """Write a stack as one document per layer plus a manifest.

    The manifest records layer order and kinds, kappa and penalty, the
    normalized subtask access kernels as triples, per-layer live flags,
    termination flags, and current task weights when a task is set.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    layer_files, kinds, kernels = [], [], []
    for k, entry in enumerate(stack.layers):
        name = f"layer_{k}.json"
        layer_files.append(name)
        if isinstance(entry, AugmentedMlmdp):
            kinds.append("augmented")
            kernels.append(_matrix_triples(entry.to_subtasks))
            write_json(directory / name, basis_to_dict(entry.basis))
        else:
            kinds.append("top")
            write_json(directory / name, basis_to_dict(entry))
    manifest = {
        "depth": stack.depth,
        "kappa": float(stack.kappa),
        "penalty": float(stack.penalty),
        "layer_files": layer_files,
        "layer_kinds": kinds,
        "subtask_kernels": kernels,
        "live_subtasks": [None if f is None else [bool(v) for v in f]
                          for f in stack.live],
        "terminated": [bool(v) for v in stack.terminated],
        "task_weights": [None if w is None else [float(v) for v in w.values]
                         for w in stack.weights],
    }
    write_json(directory / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# CSV tables


def _csv(header: str, rows: Iterable[Sequence[str]]) -> str:
    lines = [header]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def desirability_csv_raw(lmdp: Lmdp, z_full: np.ndarray) -> str:
    """state_index,label,z,V over all states; tolerates zero entries.

    Zeros (from non-converged or terminated states) render V as -inf.
    """
    with np.errstate(divide="ignore"):
        values = lmdp.rewards.temperature * np.log(z_full)
    rows = [(str(s), lmdp.partition.label(s), fmt(z_full[s]), fmt(values[s]))
            for s in range(lmdp.n_states)]
    return _csv("state_index,label,z,V", rows)


def desirability_csv(lmdp: Lmdp, z: Desirability) -> str:
    """state_index,label,z,V over all states, interior first."""
    return desirability_csv_raw(lmdp, z.full())


def weights_csv(weights: TaskWeights) -> str:
    rows = [(str(k), fmt(v)) for k, v in enumerate(weights.values)]
    return _csv("task_index,weight", rows)


def trajectory_csv(trajectory) -> str:
    """t,state,layer_accessed,event; one row per visited base state.

    layer_accessed is the deepest layer entered at that step (0 when no
    access happened).  Events: access, access_terminated, absorbed,
    truncated; empty otherwise.
    """
    by_time = {}
    for event in trajectory.events:
        name = "access" if event.terminated_layer is None else "access_terminated"
        by_time[event.base_time] = (event.deepest_layer, name)
    rows = []
    last = len(trajectory.states) - 1
    for t, state in enumerate(trajectory.states):
        layer, name = by_time.get(t, (0, ""))
        if t == last:
            name = "truncated" if trajectory.truncated else "absorbed"
            layer = 0
        rows.append((str(t), str(state), str(layer), name))
    return _csv("t,state,layer_accessed,event", rows)


def snapshots_csv(trajectory) -> str:
    """event_id,layer,task_index,weight for every recorded blend snapshot."""
    rows = []
    for event_id, layer, values in trajectory.weight_log:
        for k, v in enumerate(values):
            rows.append((str(event_id), str(layer), str(k), fmt(v)))
    return _csv("event_id,layer,task_index,weight", rows)


def curve_csv(entries: Sequence[tuple]) -> str:
    """epoch,mean_length,stderr,condition,seed rows for learning curves."""
    rows = [(str(epoch), fmt(mean), fmt(stderr), condition, str(seed))
            for epoch, mean, stderr, condition, seed in entries]
    return _csv("epoch,mean_length,stderr,condition,seed", rows)


def scaling_csv(bench_rows) -> str:
    """N,condition,total_iterations,nonzeros rows from the ring benchmark."""
    rows = [(str(r.n), r.condition, str(r.total_iterations), str(r.nonzeros))
            for r in bench_rows]
    return _csv("N,condition,total_iterations,nonzeros", rows)


# ---------------------------------------------------------------------------
# run manifests


def config_digest(config: dict) -> str:
    """sha256 of the canonical JSON rendering of a config document."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _package_version() -> str:
    try:
        from importlib.metadata import version
        return version("lsmdp")
    except Exception:
        from lsmdp import __version__
        return __version__


def run_manifest(command: str, config: dict, seed: Optional[int],
                 **extras) -> dict:
    """Provenance document written next to every CLI artifact."""
    doc = {
        "command": command,
        "config_sha256": config_digest(config),
        "seed": seed,
        "versions": {
            "lsmdp": _package_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    doc.update(extras)
    return doc
