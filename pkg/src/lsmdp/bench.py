"""Ring scaling benchmark: flat task suites against hierarchical ones.

Both conditions solve every "reach position j" task on a ring of N states by
desirability iteration at a fixed tolerance and report total sweeps and
total nonzero entries of the iterates.  The flat condition iterates each of
the N tasks over the full ring.  The hierarchical condition augments the
ring with subtasks every M = max(2, ceil(ln N)) positions, derives the layer
above, and repeats until fewer than two subtasks fit; each level solves its
own reach tasks (one per interior state, plus one per subtask state) with a
per-task sweep budget of cap_multiplier * M.  The per-step costs scale with
N (temperature N/12, exit probability 1/N), so flat sweep counts grow
roughly like N^2 while the hierarchy stays near linear in total work.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .core import (Lmdp, PassiveDynamics, RewardModel, StatePartition,
                   build_lmdp, z_iterate)
from .domains import ring_passive
from .errors import InvalidSpec
from .hierarchy import absorption_dynamics, stack_subtask_kernel

RING_STEP_PROB = 0.3
DEFAULT_CAP_MULTIPLIER = 3
ACCESS_WEIGHT = 0.25


@dataclass(frozen=True)
class BenchRow:
    """One condition's totals at one ring size."""

    n: int
    condition: str
    total_iterations: int
    nonzeros: int


def spacing_for(n: int) -> int:
    return max(2, math.ceil(math.log(n)))


def _level_lmdp(passive: PassiveDynamics, temperature: float) -> Lmdp:
    n_i, n_b = passive.n_interior, passive.n_boundary
    rewards = RewardModel(np.full(n_i, -1.0), np.zeros(n_b), temperature)
    return build_lmdp(StatePartition(n_i, n_b), passive, rewards)


def _indicator(n: int, j: int) -> np.ndarray:
    q = np.zeros(n)
    q[j] = 1.0
    return q


def _count_tasks(lmdp: Lmdp, task_rows: Sequence[int], tol: float,
                 max_iter: int) -> Tuple[int, int]:
    total, nnz = 0, 0
    for row in task_rows:
        z, iterations, _ = z_iterate(lmdp, _indicator(lmdp.n_boundary, row),
                                     tol=tol, max_iter=max_iter)
        total += iterations
        nnz += int(np.count_nonzero(z))
    return total, nnz


def flat_counts(n: int, tol: float = 1e-10) -> Tuple[int, int]:
    """Sweeps and nonzeros to solve all n reach tasks on the flat ring."""
    passive = ring_passive(n, RING_STEP_PROB, 1.0 / n)
    lmdp = _level_lmdp(passive, n / 12.0)
    return _count_tasks(lmdp, range(n), tol, max_iter=10 ** 7)


def hierarchical_counts(n: int, tol: float = 1e-10,
                        cap_multiplier: int = DEFAULT_CAP_MULTIPLIER
                        ) -> Tuple[int, int]:
    """Sweeps and nonzeros across all levels of the subtask tower.

    Level interiors shrink by the spacing factor M each time; interior state
    j of level l sits at base position j * M^l, and its reach task is the
    indicator at that base twin.  When n <= M no tower exists and the result
    equals the flat counts exactly.
    """
    N = n
    M = spacing_for(N)
    if N <= M:
        return flat_counts(N, tol)
    cap = cap_multiplier * M
    total, nnz = 0, 0
    passive = ring_passive(N, RING_STEP_PROB, 1.0 / N)
    n_base_boundary = N
    stride = 1
    while True:
        size = passive.n_interior
        lam = size / 12.0
        positions = list(range(0, size, M)) if size > M else []
        n_next = len(positions)
        if n_next < 2:
            # top level: plain reach tasks over the derived dynamics
            lmdp = _level_lmdp(passive, lam)
            twins = [(j * stride) % N for j in range(size)]
            it, nz = _count_tasks(lmdp, twins, tol, max_iter=cap)
            total += it
            nnz += nz
            break
        W = np.zeros((n_next, size))
        for t, pos in enumerate(positions):
            W[t, pos] = ACCESS_WEIGHT
        to_i, to_b, to_t = stack_subtask_kernel(passive, W)
        aug_passive = PassiveDynamics(to_i, sp.vstack([to_b, to_t]).tocsc())
        lmdp = _level_lmdp(aug_passive, lam)
        twins = [(j * stride) % N for j in range(size)]
        sub_rows = [n_base_boundary + t for t in range(n_next)]
        it, nz = _count_tasks(lmdp, list(twins) + sub_rows, tol, max_iter=cap)
        total += it
        nnz += nz
        next_i, next_b = absorption_dynamics(to_i, to_b, to_t)
        passive = PassiveDynamics(next_i, next_b)
        stride *= M
    return total, nnz


def ring_scaling(sizes: Sequence[int], tol: float = 1e-10,
                 cap_multiplier: int = DEFAULT_CAP_MULTIPLIER):
    """Run both conditions over the given ring sizes.

    Returns (rows, slopes): one BenchRow per (size, condition) and, when at
    least two distinct sizes are given, the log-log regression slopes of
    total iterations and nonzeros for each condition.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise InvalidSpec("at least one ring size is required")
    if any(s < 3 for s in sizes):
        raise InvalidSpec("ring sizes must be at least 3")
    rows: List[BenchRow] = []
    for n in sizes:
        it, nz = flat_counts(n, tol)
        rows.append(BenchRow(n, "flat", it, nz))
        it, nz = hierarchical_counts(n, tol, cap_multiplier)
        rows.append(BenchRow(n, "hierarchical", it, nz))
    slopes: Dict[str, float] = {}
    if len(set(sizes)) >= 2:
        log_n = np.log([r.n for r in rows if r.condition == "flat"])
        for condition in ("flat", "hierarchical"):
            sel = [r for r in rows if r.condition == condition]
            for metric in ("total_iterations", "nonzeros"):
                values = np.log([getattr(r, metric) for r in sel])
                slopes[f"{condition}_{metric}"] = float(
                    np.polyfit(log_n, values, 1)[0])
    return rows, slopes
