"""Deep hierarchies of multitask LMDPs.

A layer is augmented by appending subtask states: extra absorbing states
reachable through a nonnegative weight matrix stacked under the passive
kernel and renormalized columnwise.  Entering a subtask state hands control
to the layer above, whose interior states *are* those subtask states and
whose passive dynamics are the absorption probabilities of the layer below
(fundamental-matrix identities).  The layer above steers the layer below by
inpainting rewards onto the subtask states: the difference between its
desired next-state distribution and its passive one, scaled by kappa, becomes
a boundary reward vector that the lower layer re-blends against its
subtask-task columns.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    DENSE_CUTOFF,
    Desirability,
    Lmdp,
    PassiveDynamics,
    RewardModel,
    StatePartition,
    build_lmdp,
    solve_interior,
)
from .errors import (
    AllZeroColumn,
    AlreadyTerminated,
    CannotTerminateBase,
    DimensionMismatch,
    InvalidSpec,
    NoTaskSet,
    SingularFundamentalMatrix,
    UnreachableSubtasks,
)
from .multitask import TaskBasis, TaskWeights, blend_weights_matrix, build_task_basis

DEFAULT_SUBTASK_PENALTY_SCALE = -5.0
# Cross-block fill of the augmented task matrix (base tasks priced at subtask
# states and vice versa).  Must sit far below any goal penalty a task might
# place on a boundary twin: the neutral subtask blend contributes roughly
# n_subtasks * exp(fill / lambda) desirability to every twin, and that
# leakage has to stay negligible against the smallest intended target mass.
AUGMENT_FILL_SCALE = -20.0


@dataclass(frozen=True)
class SubtaskStructure:
    """Interior-to-subtask transition weights, (n_subtasks, n_interior).

    Weights are relative: they are stacked under the passive kernel and the
    whole column renormalized, so a weight w at a column with unit passive
    mass yields subtask probability w / (1 + w).
    """

    weights: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", W)
        if W.ndim != 2:
            raise DimensionMismatch(f"subtask weights must be 2-D, got {W.ndim}-D")
        if W.size == 0 or W.shape[0] < 1:
            raise InvalidSpec("need at least one subtask row")
        if not np.isfinite(W).all() or W.min() < 0:
            raise InvalidSpec("subtask weights must be finite and nonnegative")
        row_mass = W.sum(axis=1)
        if (row_mass == 0).any():
            # zero rows keep the augmentation well formed (passive mass
            # remains) but the subtask can never be entered; deriving a
            # higher layer from it fails with SingularFundamentalMatrix
            warnings.warn(
                f"subtask {int(np.argmin(row_mass))} has no entry states",
                UnreachableSubtasks,
            )
        if self.labels is not None and len(self.labels) != W.shape[0]:
            raise DimensionMismatch("one label per subtask required")

    @property
    def n_subtasks(self) -> int:
        return self.weights.shape[0]


def default_subtask_rewards(n_subtasks: int, penalty: float,
                            temperature: float) -> np.ndarray:
    """One task per subtask state: reward 0 at its own state, penalty at the
    rest, exponentiated by the temperature."""
    if n_subtasks < 1:
        raise InvalidSpec("need at least one subtask")
    off = np.exp(penalty / temperature)
    Q_t = np.full((n_subtasks, n_subtasks), off)
    np.fill_diagonal(Q_t, 1.0)
    return Q_t


@dataclass(frozen=True)
class AugmentedMlmdp:
    """A multitask layer extended with subtask states.

    The augmented LMDP treats subtask states as extra boundary states
    (indices n_boundary_base .. n_boundary_base+n_subtasks-1 of the boundary
    block).  Its task basis is the base boundary-task columns plus one task
    per subtask state, solved over the augmented dynamics.
    """

    lmdp: Lmdp                      # augmented: boundary = base boundary + subtasks
    basis: TaskBasis                # over the augmented LMDP, [base tasks | subtask tasks]
    to_interior: sp.csc_matrix      # renormalized blocks of the stacked kernel
    to_boundary: sp.csc_matrix      # base-boundary rows only
    to_subtasks: sp.csc_matrix
    subtask_rewards: np.ndarray     # (n_subtasks, n_subtasks) exponentiated block
    n_base_tasks: int
    n_base_boundary: int
    penalty: float
    live_subtasks: np.ndarray       # default enabled flags, copied per episode

    @property
    def n_subtasks(self) -> int:
        return self.to_subtasks.shape[0]

    def subtask_state_index(self, t: int) -> int:
        """Global state index of subtask t in the augmented LMDP."""
        return self.lmdp.n_interior + self.n_base_boundary + t


def stack_subtask_kernel(passive: PassiveDynamics, weights: np.ndarray):
    """Stack subtask access mass under a passive kernel and renormalize.

    Returns the three column-stochastic blocks (to_interior, to_boundary,
    to_subtasks) of the augmented kernel, as csc matrices.
    """
    stacked = sp.vstack([
        passive.to_interior,
        passive.to_boundary,
        sp.csc_matrix(weights),
    ]).tocsc()
    mass = np.asarray(stacked.sum(axis=0)).ravel()
    if (mass <= 0).any():
        raise AllZeroColumn(f"stacked column {int(np.argmin(mass))} has no mass")
    stacked = (stacked @ sp.diags(1.0 / mass)).tocsc()
    n_i, n_b = passive.n_interior, passive.n_boundary
    return stacked[:n_i], stacked[n_i:n_i + n_b], stacked[n_i + n_b:]


def absorption_dynamics(to_interior, to_boundary, to_subtasks):
    """Higher-layer passive dynamics from absorption of the walk below.

    Column t' conditions on re-entering the lower layer from subtask t' (the
    renormalized t'-th column of to_subtasks^T); rows are the probabilities
    of absorbing at each subtask state and each boundary state.  Stacked
    columns must sum to 1 up to solver accuracy, since the walk absorbs with
    probability 1.

    Returns (to_interior_next, to_boundary_next) as dense arrays.
    """
    to_interior = _as_csc_block(to_interior)
    to_boundary = _as_csc_block(to_boundary)
    to_subtasks = _as_csc_block(to_subtasks)
    n_i = to_interior.shape[0]
    entries = to_subtasks.T.toarray()                # (n_i, n_t)
    col_mass = entries.sum(axis=0)
    if (col_mass <= 0).any():
        raise SingularFundamentalMatrix(
            f"subtask {int(np.argmin(col_mass))} has no entry distribution"
        )
    entries = entries / col_mass
    A = (sp.eye(n_i, format="csc") - to_interior).tocsc()
    try:
        if n_i < DENSE_CUTOFF:
            visits = np.linalg.solve(A.toarray(), entries)
        else:
            visits = spla.splu(A).solve(entries)
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        raise SingularFundamentalMatrix(str(exc)) from exc
    if not np.isfinite(visits).all():
        raise SingularFundamentalMatrix("fundamental system produced non-finite visits")
    to_interior_next = to_subtasks @ visits
    to_boundary_next = to_boundary @ visits
    total = to_interior_next.sum(axis=0) + to_boundary_next.sum(axis=0)
    if np.abs(total - 1.0).max() > 1e-10:
        raise SingularFundamentalMatrix(
            f"derived columns sum to {total.min():.12g}..{total.max():.12g}"
        )
    return np.asarray(to_interior_next), np.asarray(to_boundary_next)


def _as_csc_block(matrix) -> sp.csc_matrix:
    if sp.issparse(matrix):
        return matrix.tocsc()
    return sp.csc_matrix(np.asarray(matrix, dtype=np.float64))


def augment(mlmdp: TaskBasis, structure: SubtaskStructure,
            subtask_rewards: Optional[np.ndarray] = None,
            penalty: Optional[float] = None,
            fill_penalty: Optional[float] = None) -> AugmentedMlmdp:
    """Append subtask states to a multitask layer.

    The stacked kernel [to_interior; to_boundary; weights] is renormalized
    columnwise.  Subtask tasks default to reward 0 at their own state and
    ``penalty`` (default -5 * lambda) at the other subtask states.  The
    cross blocks of the combined task matrix (base tasks at subtask states,
    subtask tasks at boundary twins) are filled with the much steeper
    ``fill_penalty`` (default -20 * lambda), kept strictly positive so
    every basis column stays a valid exponentiated reward.
    """
    base = mlmdp.base
    lam = base.rewards.temperature
    if penalty is None:
        penalty = DEFAULT_SUBTASK_PENALTY_SCALE * lam
    if fill_penalty is None:
        fill_penalty = AUGMENT_FILL_SCALE * lam
    W = structure.weights
    if W.shape[1] != base.n_interior:
        raise DimensionMismatch(
            f"subtask weights cover {W.shape[1]} interior states, LMDP has "
            f"{base.n_interior}"
        )
    if W.sum() == 0:
        warnings.warn("subtask states carry no transition mass", UnreachableSubtasks)

    to_interior, to_boundary, to_subtasks = stack_subtask_kernel(base.passive, W)
    n_i, n_b = base.n_interior, base.n_boundary
    n_t = structure.n_subtasks

    if subtask_rewards is None:
        Q_t = default_subtask_rewards(n_t, penalty, lam)
    else:
        Q_t = np.asarray(subtask_rewards, dtype=np.float64)
        if Q_t.shape != (n_t, n_t):
            raise DimensionMismatch(f"subtask rewards shape {Q_t.shape}, expected {(n_t, n_t)}")
        if not np.isfinite(Q_t).all() or Q_t.min() <= 0:
            raise InvalidSpec("subtask rewards must be strictly positive (exponentiated)")

    labels = None
    if base.partition.labels is not None:
        sub_labels = (structure.labels if structure.labels is not None
                      else tuple(f"t{t}" for t in range(n_t)))
        labels = tuple(base.partition.labels) + tuple(sub_labels)
    partition = StatePartition(n_i, n_b + n_t, labels)
    rewards = RewardModel(
        base.rewards.interior,
        np.concatenate([base.rewards.boundary, np.full(n_t, penalty)]),
        lam,
    )
    passive = PassiveDynamics(to_interior, sp.vstack([to_boundary, to_subtasks]))
    aug_lmdp = build_lmdp(partition, passive, rewards)

    fill = np.exp(fill_penalty / lam)
    n_tasks = mlmdp.n_tasks
    Q_full = np.full((n_b + n_t, n_tasks + n_t), fill)
    Q_full[:n_b, :n_tasks] = mlmdp.boundary_tasks
    Q_full[n_b:, n_tasks:] = Q_t
    basis = build_task_basis(aug_lmdp, Q_full)

    return AugmentedMlmdp(
        lmdp=aug_lmdp,
        basis=basis,
        to_interior=to_interior.tocsc(),
        to_boundary=to_boundary.tocsc(),
        to_subtasks=to_subtasks.tocsc(),
        subtask_rewards=Q_t,
        n_base_tasks=n_tasks,
        n_base_boundary=n_b,
        penalty=penalty,
        live_subtasks=np.ones(n_t, dtype=bool),
    )


def derive_higher_layer(aug: AugmentedMlmdp):
    """Passive dynamics of the layer above an augmented layer.

    See absorption_dynamics for the construction.  Returns
    (to_interior_next, to_boundary_next) as dense arrays of shapes
    (n_subtasks, n_subtasks) and (n_base_boundary, n_subtasks).
    """
    return absorption_dynamics(aug.to_interior, aug.to_boundary, aug.to_subtasks)


def inpaint_rewards(action_column: np.ndarray, passive_column: np.ndarray,
                    kappa: float, n_interior: Optional[int] = None) -> np.ndarray:
    """Reward a layer paints onto the subtask states below it.

    kappa * (a - p) restricted to the layer's interior entries, which are
    exactly the subtask states of the layer below.  Zero when the layer's
    action agrees with its passive dynamics.
    """
    a = np.asarray(action_column, dtype=np.float64)
    p = np.asarray(passive_column, dtype=np.float64)
    if a.shape != p.shape:
        raise DimensionMismatch(f"column shapes differ: {a.shape} vs {p.shape}")
    cut = a.shape[0] if n_interior is None else n_interior
    return kappa * (a[:cut] - p[:cut])


def rewards_to_task_weights(aug: AugmentedMlmdp, inpainted: np.ndarray,
                            current: TaskWeights, method: str = "nnls") -> TaskWeights:
    """Re-blend the subtask-task block against an inpainted reward vector.

    Only the subtask-task weights move; base boundary-task weights keep their
    current values.  The target is exp(inpainted / lambda) over the subtask
    states, fitted to the subtask-reward block.
    """
    r_t = np.asarray(inpainted, dtype=np.float64)
    if r_t.shape != (aug.n_subtasks,):
        raise DimensionMismatch(
            f"inpainted rewards shape {r_t.shape}, expected ({aug.n_subtasks},)"
        )
    lam = aug.lmdp.rewards.temperature
    q_t = np.exp(r_t / lam)
    sub = blend_weights_matrix(aug.subtask_rewards, q_t, method=method)
    values = np.concatenate([current.values[:aug.n_base_tasks], sub.values])
    return TaskWeights(values, sub.residual, method)


# ---------------------------------------------------------------------------
# stacks


@dataclass
class HierarchyStack:
    """An ordered tower of layers plus per-episode execution state.

    ``layers`` holds AugmentedMlmdp for every layer below the top and a plain
    TaskBasis at the top.  Layer structures are immutable and shared between
    clones; weights, composite desirabilities, live flags, and termination
    flags are per-clone.
    """

    layers: List[object]
    kappa: float
    penalty: float
    weights: List[Optional[TaskWeights]]
    z_full: List[Optional[np.ndarray]]
    live: List[Optional[np.ndarray]]
    terminated: List[bool]
    target: Optional[np.ndarray] = None  # boundary task set by set_task

    @property
    def depth(self) -> int:
        return len(self.layers)

    def is_augmented(self, layer: int) -> bool:
        return isinstance(self.layers[layer], AugmentedMlmdp)

    def layer_lmdp(self, layer: int) -> Lmdp:
        entry = self.layers[layer]
        return entry.lmdp if isinstance(entry, AugmentedMlmdp) else entry.base

    def layer_basis(self, layer: int) -> TaskBasis:
        entry = self.layers[layer]
        return entry.basis if isinstance(entry, AugmentedMlmdp) else entry

    def n_subtasks(self, layer: int) -> int:
        entry = self.layers[layer]
        return entry.n_subtasks if isinstance(entry, AugmentedMlmdp) else 0

    def subtask_state_range(self, layer: int):
        """Global state indices [lo, hi) of the layer's subtask states."""
        entry = self.layers[layer]
        if not isinstance(entry, AugmentedMlmdp):
            return (entry.base.n_states, entry.base.n_states)
        lo = entry.lmdp.n_interior + entry.n_base_boundary
        return (lo, lo + entry.n_subtasks)

    def clone(self) -> "HierarchyStack":
        return HierarchyStack(
            layers=self.layers,
            kappa=self.kappa,
            penalty=self.penalty,
            weights=list(self.weights),
            z_full=[None if z is None else z.copy() for z in self.z_full],
            live=[None if f is None else f.copy() for f in self.live],
            terminated=list(self.terminated),
            target=None if self.target is None else self.target.copy(),
        )

    # -- task management -----------------------------------------------------

    def set_task(self, boundary_target: np.ndarray, method: str = "nnls") -> None:
        """Blend the same boundary-reward target at every layer.

        All layers share the base boundary set, so one target vector defines
        the goal everywhere.  Augmented layers also get the neutral subtask
        blend (inpainted reward 0, i.e. target q_t = 1).
        """
        q = np.asarray(boundary_target, dtype=np.float64)
        self.target = q.copy()
        for layer, entry in enumerate(self.layers):
            if isinstance(entry, AugmentedMlmdp):
                base_block = entry.basis.boundary_tasks[:entry.n_base_boundary,
                                                        :entry.n_base_tasks]
                wb = blend_weights_matrix(base_block, q, method=method)
                wt = blend_weights_matrix(entry.subtask_rewards,
                                          np.ones(entry.n_subtasks), method=method)
                w = TaskWeights(np.concatenate([wb.values, wt.values]),
                                wb.residual, method)
            else:
                w = blend_weights_matrix(entry.boundary_tasks, q, method=method)
            self.weights[layer] = w
            self._recompose(layer)

    def _recompose(self, layer: int) -> None:
        """Refresh the layer's composite desirability from its weights."""
        basis = self.layer_basis(layer)
        w = self.weights[layer].values
        z_i = basis.desirabilities @ w
        z_b = basis.boundary_tasks @ w
        z = np.concatenate([z_i, z_b])
        if self.is_augmented(layer) and self.live[layer] is not None \
                and not self.live[layer].all():
            self._disable_dead_subtasks(layer, z)
        self.z_full[layer] = z

    def _disable_dead_subtasks(self, layer: int, z: np.ndarray) -> None:
        """Zero desirability on dead subtask states and re-solve the interior.

        Passive dynamics stay fixed; zero z removes the states' transition
        mass through the policy tilt, and the interior must be re-solved
        because the cached basis columns assumed positive values there.
        """
        entry = self.layers[layer]
        lo, hi = self.subtask_state_range(layer)
        n_i = entry.lmdp.n_interior
        dead = ~self.live[layer]
        z[lo:hi][dead] = 0.0
        z[:n_i] = solve_interior(entry.lmdp, z[n_i:])

    def apply_inpaint(self, layer: int, inpainted: np.ndarray,
                      method: str = "nnls") -> None:
        """Receive inpainted rewards from the layer above and re-blend."""
        entry = self.layers[layer]
        if not isinstance(entry, AugmentedMlmdp):
            raise InvalidSpec("only augmented layers can receive inpainted rewards")
        if self.weights[layer] is None:
            raise NoTaskSet("set_task must run before inpainting")
        self.weights[layer] = rewards_to_task_weights(
            entry, inpainted, self.weights[layer], method=method)
        self._recompose(layer)

    def policy_state(self, layer: int):
        """(lmdp, z_full) pair for sampling at a layer, validated."""
        if self.weights[layer] is None or self.z_full[layer] is None:
            raise NoTaskSet("stack has no task; call set_task first")
        return self.layer_lmdp(layer), self.z_full[layer]


def build_stack(base: TaskBasis, structures: Sequence[SubtaskStructure],
                kappa: Optional[float] = None,
                penalty: Optional[float] = None,
                interior_reward: float = -1.0,
                temperatures: Optional[Sequence[float]] = None) -> HierarchyStack:
    """Assemble a depth len(structures)+1 tower of layers.

    Each structure augments the current layer; the layer above lives on the
    subtask states with absorption-derived passive dynamics, keeps the base
    boundary set, inherits the boundary-task matrix, and charges a constant
    ``interior_reward`` per step.  ``temperatures`` optionally overrides the
    derived layers' temperature (one entry per derived layer).
    """
    lam0 = base.base.rewards.temperature
    if kappa is None:
        kappa = lam0
    if penalty is None:
        penalty = DEFAULT_SUBTASK_PENALTY_SCALE * lam0
    if temperatures is not None and len(temperatures) != len(structures):
        raise DimensionMismatch("one temperature per derived layer required")

    layers: List[object] = []
    current = base
    for level, structure in enumerate(structures):
        aug = augment(current, structure, penalty=penalty)
        layers.append(aug)
        to_i, to_b = derive_higher_layer(aug)
        n_next = structure.n_subtasks
        lam_next = (temperatures[level] if temperatures is not None
                    else current.base.rewards.temperature)
        labels = None
        if structure.labels is not None:
            bound_labels = tuple(
                current.base.partition.label(current.base.n_interior + b)
                for b in range(aug.n_base_boundary)
            )
            labels = tuple(structure.labels) + bound_labels
        partition = StatePartition(n_next, aug.n_base_boundary, labels)
        rewards = RewardModel(
            np.full(n_next, interior_reward),
            current.base.rewards.boundary,
            lam_next,
        )
        lmdp_next = build_lmdp(partition, PassiveDynamics(to_i, to_b), rewards)
        # the derived layer keeps the base boundary set, so it can reuse the
        # boundary-task matrix of the layer below unchanged
        current = build_task_basis(lmdp_next, current.boundary_tasks)
    layers.append(current)
    depth = len(layers)
    return HierarchyStack(
        layers=layers,
        kappa=kappa,
        penalty=penalty,
        weights=[None] * depth,
        z_full=[None] * depth,
        live=[np.ones(structures[l].n_subtasks, dtype=bool) if l < depth - 1 else None
              for l in range(depth)],
        terminated=[False] * depth,
    )


def terminate_layer(stack: HierarchyStack, layer: int) -> None:
    """Switch a layer off for the rest of the episode.

    The layer below loses all transition mass into its subtask states: their
    composite desirability is set to zero and its interior re-solved, so the
    policy tilt can never select them again.  The base layer cannot be
    terminated.
    """
    if not 0 <= layer < stack.depth:
        raise InvalidSpec(f"no layer {layer} in a depth-{stack.depth} stack")
    if layer == 0:
        raise CannotTerminateBase("the base layer cannot terminate")
    if stack.terminated[layer]:
        raise AlreadyTerminated(f"layer {layer} already terminated")
    stack.terminated[layer] = True
    below = layer - 1
    stack.live[below][:] = False
    if stack.z_full[below] is not None:
        stack._recompose(below)
