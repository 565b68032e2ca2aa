"""First-exit linearly solvable MDPs: problem types and desirability solvers.

Conventions used throughout the package:

* States are indexed ``0 .. n_interior-1`` (interior) followed by
  ``n_interior .. n_interior+n_boundary-1`` (absorbing boundary).
* Transition matrices are column-indexed by source state: ``P[dest, src]``.
  ``to_interior`` is (n_interior, n_interior), ``to_boundary`` is
  (n_boundary, n_interior); each source column sums to 1 across both blocks.
* The desirability of a state is z(s) = exp(V(s) / lambda).  Boundary states
  are absorbing, so their desirability equals their exponentiated reward.

The central identity is the linear Bellman equation

    z_i = diag(q_i) (to_interior^T z_i + to_boundary^T z_b),

a nonsingular sparse linear system whenever every interior state can reach the
boundary.  ``solve_direct`` factorizes it; ``solve_z_iteration`` applies the
fixed-point map, which contracts monotonically from a zero start.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceWarning,
    DimensionMismatch,
    InvalidSpec,
    InvalidTrajectory,
    NoAbsorption,
    NonPositiveDesirability,
    NotStochastic,
    RewardOverflow,
    SingularSystem,
    ZeroNormalizer,
)

# Columns whose sums deviate from 1 by more than this are rejected; accepted
# columns are renormalized exactly so downstream code can assume 1e-12.
STOCHASTIC_ATOL = 1e-9
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000
# Below this many interior states a dense factorization beats sparse LU setup.
DENSE_CUTOFF = 64


@dataclass(frozen=True)
class StatePartition:
    """Sizes of the interior/boundary split, with optional display labels."""

    n_interior: int
    n_boundary: int
    labels: Optional[tuple] = None

    def __post_init__(self):
        if self.n_interior < 1 or self.n_boundary < 1:
            raise InvalidSpec(
                f"need at least one interior and one boundary state, got "
                f"{self.n_interior}/{self.n_boundary}"
            )
        if self.labels is not None and len(self.labels) != self.n_states:
            raise DimensionMismatch(
                f"{len(self.labels)} labels for {self.n_states} states"
            )

    @property
    def n_states(self) -> int:
        return self.n_interior + self.n_boundary

    def is_boundary(self, state: int) -> bool:
        return state >= self.n_interior

    def label(self, state: int) -> str:
        if self.labels is not None:
            return str(self.labels[state])
        if state < self.n_interior:
            return f"i{state}"
        return f"b{state - self.n_interior}"


def _as_csc(matrix, shape=None) -> sp.csc_matrix:
    out = sp.csc_matrix(matrix, dtype=np.float64)
    if shape is not None and out.shape != shape:
        raise DimensionMismatch(f"expected shape {shape}, got {out.shape}")
    return out


class PassiveDynamics:
    """Uncontrolled transition kernel split into interior and boundary blocks.

    Parameters
    ----------
    to_interior : (n_interior, n_interior) array or sparse matrix
        Probability of moving between interior states, column = source.
    to_boundary : (n_boundary, n_interior) array or sparse matrix
        Probability of absorbing at each boundary state, column = source.

    Columns are validated to be stochastic within 1e-9 and then renormalized
    exactly.  Construction fails with NoAbsorption if some interior state has
    no path to any boundary state.
    """

    def __init__(self, to_interior, to_boundary):
        P_i = _as_csc(to_interior)
        P_b = _as_csc(to_boundary)
        if P_i.shape[0] != P_i.shape[1]:
            raise DimensionMismatch(f"interior block must be square, got {P_i.shape}")
        if P_b.shape[1] != P_i.shape[1]:
            raise DimensionMismatch(
                f"boundary block has {P_b.shape[1]} source columns, "
                f"interior block has {P_i.shape[1]}"
            )
        if P_i.nnz and P_i.data.min() < 0 or P_b.nnz and P_b.data.min() < 0:
            raise NotStochastic("negative transition probability")
        sums = np.asarray(P_i.sum(axis=0)).ravel() + np.asarray(P_b.sum(axis=0)).ravel()
        bad = np.abs(sums - 1.0) > STOCHASTIC_ATOL
        if bad.any():
            s = int(np.argmax(bad))
            raise NotStochastic(f"column {s} sums to {sums[s]:.12g}")
        scale = sp.diags(1.0 / sums)
        self.to_interior = (P_i @ scale).tocsc()
        self.to_boundary = (P_b @ scale).tocsc()
        self._check_absorption()

    def _check_absorption(self):
        n = self.n_interior
        can = np.asarray(self.to_boundary.sum(axis=0)).ravel() > 0
        # propagate "can reach boundary" backwards through interior edges
        while not can.all():
            grown = can | ((can.astype(np.float64) @ self.to_interior) > 0)
            if (grown == can).all():
                stuck = int(np.argmin(can))
                raise NoAbsorption(
                    f"interior state {stuck} cannot reach any boundary state"
                )
            can = grown

    @property
    def n_interior(self) -> int:
        return self.to_interior.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.to_boundary.shape[0]

    @cached_property
    def full_matrix(self) -> sp.csc_matrix:
        """(n_states, n_interior) stacked kernel, boundary rows last."""
        return sp.vstack([self.to_interior, self.to_boundary]).tocsc()


@dataclass(frozen=True)
class RewardModel:
    """State rewards r and temperature lambda; q = exp(r / lambda)."""

    interior: np.ndarray
    boundary: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "interior", np.asarray(self.interior, dtype=np.float64))
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=np.float64))
        if not (self.temperature > 0) or not math.isfinite(self.temperature):
            raise InvalidSpec(f"temperature must be positive, got {self.temperature}")
        if not (np.isfinite(self.interior).all() and np.isfinite(self.boundary).all()):
            raise InvalidSpec("rewards must be finite")


def exponentiate_rewards(rewards: RewardModel):
    """Return (q_interior, q_boundary) = exp(r / lambda), strictly positive.

    Raises RewardOverflow when r / lambda exceeds the largest representable
    exponent, since a non-finite q poisons every downstream solve.
    """
    log_max = math.log(np.finfo(np.float64).max)
    scaled_i = rewards.interior / rewards.temperature
    scaled_b = rewards.boundary / rewards.temperature
    if scaled_i.size and scaled_i.max() > log_max or scaled_b.size and scaled_b.max() > log_max:
        raise RewardOverflow(
            f"reward / temperature exceeds log(float64 max) = {log_max:.3f}"
        )
    return np.exp(scaled_i), np.exp(scaled_b)


@dataclass(frozen=True)
class Lmdp:
    """A first-exit linearly solvable MDP: partition + passive kernel + rewards.

    Immutable after construction; safe to share across episodes and threads.
    Use build_lmdp to construct with full validation.
    """

    partition: StatePartition
    passive: PassiveDynamics
    rewards: RewardModel

    @property
    def n_interior(self) -> int:
        return self.partition.n_interior

    @property
    def n_boundary(self) -> int:
        return self.partition.n_boundary

    @property
    def n_states(self) -> int:
        return self.partition.n_states

    @cached_property
    def q_interior(self) -> np.ndarray:
        return exponentiate_rewards(self.rewards)[0]

    @cached_property
    def q_boundary(self) -> np.ndarray:
        return exponentiate_rewards(self.rewards)[1]


def build_lmdp(partition: StatePartition, passive: PassiveDynamics,
               rewards: RewardModel) -> Lmdp:
    """Validate cross-component dimensions and assemble an Lmdp."""
    if passive.n_interior != partition.n_interior:
        raise DimensionMismatch(
            f"passive kernel has {passive.n_interior} interior states, "
            f"partition has {partition.n_interior}"
        )
    if passive.n_boundary != partition.n_boundary:
        raise DimensionMismatch(
            f"passive kernel has {passive.n_boundary} boundary states, "
            f"partition has {partition.n_boundary}"
        )
    if rewards.interior.shape != (partition.n_interior,):
        raise DimensionMismatch(
            f"interior rewards shape {rewards.interior.shape}, "
            f"expected ({partition.n_interior},)"
        )
    if rewards.boundary.shape != (partition.n_boundary,):
        raise DimensionMismatch(
            f"boundary rewards shape {rewards.boundary.shape}, "
            f"expected ({partition.n_boundary},)"
        )
    exponentiate_rewards(rewards)  # reject overflow at build time
    return Lmdp(partition, passive, rewards)


@dataclass(frozen=True)
class Desirability:
    """Strictly positive z over interior and boundary states."""

    interior: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "interior", np.asarray(self.interior, dtype=np.float64))
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=np.float64))
        for part, name in ((self.interior, "interior"), (self.boundary, "boundary")):
            if part.size and (not np.isfinite(part).all() or part.min() <= 0):
                raise NonPositiveDesirability(f"{name} desirability must be positive")

    def full(self) -> np.ndarray:
        return np.concatenate([self.interior, self.boundary])


# ---------------------------------------------------------------------------
# solvers


def _system_rhs(lmdp: Lmdp, q_boundary: np.ndarray):
    """Assemble (A, b) with A = I - diag(q_i) P_i^T, b = diag(q_i) P_b^T q_b."""
    q_i = lmdp.q_interior
    n = lmdp.n_interior
    A = sp.eye(n, format="csr") - sp.diags(q_i) @ lmdp.passive.to_interior.T
    b = q_i * (lmdp.passive.to_boundary.T @ q_boundary)
    return A.tocsc(), b


def solve_interior(lmdp: Lmdp, q_boundary: np.ndarray) -> np.ndarray:
    """Solve the linear Bellman system for arbitrary boundary values.

    Returns the raw interior z vector without positivity checks, which lets
    callers pass boundary vectors with exact zeros (indicator tasks,
    terminated subtasks).  Residual is verified against
    1e-10 * (1 + max|z|) with one step of iterative refinement before
    declaring the system singular.
    """
    q_boundary = np.asarray(q_boundary, dtype=np.float64)
    if q_boundary.shape != (lmdp.n_boundary,):
        raise DimensionMismatch(
            f"boundary vector shape {q_boundary.shape}, expected ({lmdp.n_boundary},)"
        )
    A, b = _system_rhs(lmdp, q_boundary)
    try:
        if lmdp.n_interior < DENSE_CUTOFF:
            dense = A.toarray()
            z = np.linalg.solve(dense, b)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                z = spla.spsolve(A, b)
    except (np.linalg.LinAlgError, spla.MatrixRankWarning, RuntimeError) as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.isfinite(z).all():
        raise SingularSystem("solver returned non-finite values")
    bound = DEFAULT_TOL * (1.0 + np.abs(z).max(initial=0.0))
    residual = np.abs(A @ z - b).max(initial=0.0)
    if residual > bound:
        # one refinement pass, then give up
        if lmdp.n_interior < DENSE_CUTOFF:
            z = z + np.linalg.solve(A.toarray(), b - A @ z)
        else:
            z = z + spla.spsolve(A, b - A @ z)
        residual = np.abs(A @ z - b).max(initial=0.0)
        if residual > bound or not np.isfinite(z).all():
            raise SingularSystem(f"residual {residual:.3e} exceeds bound {bound:.3e}")
    return z


def solve_direct(lmdp: Lmdp) -> Desirability:
    """Solve the first-exit problem by direct sparse/dense factorization.

    Returns
    -------
    Desirability
        z over interior and boundary states; boundary z equals the
        exponentiated boundary reward.
    """
    q_b = lmdp.q_boundary
    z_i = solve_interior(lmdp, q_b)
    return Desirability(z_i, q_b)


def z_iterate(lmdp: Lmdp, q_boundary: np.ndarray, z0: Optional[np.ndarray] = None,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Run the desirability fixed-point iteration on raw arrays.

    Returns (z, iterations, converged).  Iterating from z0 = 0 the iterates
    grow monotonically toward the solution; convergence is declared when the
    successive-iterate infinity-norm change drops to tol.
    """
    q_boundary = np.asarray(q_boundary, dtype=np.float64)
    q_i = lmdp.q_interior
    # row-scaled transpose applies one sweep as a single sparse matvec
    T = (sp.diags(q_i) @ lmdp.passive.to_interior.T).tocsr()
    b = q_i * (lmdp.passive.to_boundary.T @ q_boundary)
    z = np.zeros(lmdp.n_interior) if z0 is None else np.asarray(z0, dtype=np.float64).copy()
    iterations = 0
    converged = False
    while iterations < max_iter:
        z_new = T @ z + b
        iterations += 1
        if np.max(np.abs(z_new - z), initial=0.0) <= tol:
            z = z_new
            converged = True
            break
        z = z_new
    return z, iterations, converged


def solve_z_iteration(lmdp: Lmdp, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER,
                      z0: Optional[np.ndarray] = None):
    """Solve the first-exit problem by fixed-point iteration.

    Parameters
    ----------
    tol : float
        Successive-iterate infinity-norm threshold.
    max_iter : int
        Sweep budget; exhausting it emits ConvergenceWarning, not an error,
        and the partial iterate is still returned.
    z0 : array, optional
        Starting iterate; defaults to zero, which converges monotonically
        from below.

    Returns
    -------
    (Desirability, int)
        The fixed point and the number of sweeps applied.
    """
    q_b = lmdp.q_boundary
    z_i, iterations, converged = z_iterate(lmdp, q_b, z0=z0, tol=tol, max_iter=max_iter)
    if not converged:
        warnings.warn(
            f"z-iteration hit max_iter={max_iter} before reaching tol={tol:g}",
            ConvergenceWarning,
        )
    return Desirability(z_i, q_b), iterations


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class PolicyMatrix:
    """Controlled transition kernel, (n_states, n_interior), column = source."""

    matrix: sp.csc_matrix
    n_interior: int

    def column(self, state: int) -> np.ndarray:
        return np.asarray(self.matrix[:, state].todense()).ravel()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def optimal_policy(lmdp: Lmdp, z: Desirability) -> PolicyMatrix:
    """Tilt the passive kernel by next-state desirability and renormalize.

    a(s'|s) = P(s'|s) z(s') / sum_t P(t|s) z(t).  The support of each column
    is contained in the passive column's support by construction.
    """
    z_full = np.concatenate([np.asarray(z.interior), np.asarray(z.boundary)])
    if z_full.shape[0] != lmdp.n_states:
        raise DimensionMismatch(
            f"desirability covers {z_full.shape[0]} states, LMDP has {lmdp.n_states}"
        )
    tilted = (sp.diags(z_full) @ lmdp.passive.full_matrix).tocsc()
    mass = np.asarray(tilted.sum(axis=0)).ravel()
    if (mass <= 0).any():
        s = int(np.argmin(mass))
        raise ZeroNormalizer(f"policy column {s} has zero desirability mass")
    matrix = (tilted @ sp.diags(1.0 / mass)).tocsc()
    return PolicyMatrix(matrix, lmdp.n_interior)


def policy_column(lmdp: Lmdp, z_full: np.ndarray, state: int):
    """Sparse one-column policy: (row_indices, probabilities) at one source.

    Used in rollout loops where materializing the full policy per blend
    update would dominate the cost.
    """
    P = lmdp.passive.full_matrix
    lo, hi = P.indptr[state], P.indptr[state + 1]
    rows = P.indices[lo:hi]
    vals = P.data[lo:hi] * z_full[rows]
    total = vals.sum()
    if not (total > 0):
        raise ZeroNormalizer(f"policy column {state} has zero desirability mass")
    return rows, vals / total


def value_from_desirability(z: Desirability, temperature: float) -> np.ndarray:
    """V = lambda log z over all states, interior first."""
    full = z.full()
    if full.size and (not np.isfinite(full).all() or full.min() <= 0):
        raise NonPositiveDesirability("cannot take log of non-positive desirability")
    return temperature * np.log(full)


def draw_from(rows: np.ndarray, probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one index from an explicit finite distribution."""
    cum = np.cumsum(probs)
    u = rng.random() * cum[-1]
    k = int(np.searchsorted(cum, u, side="right"))
    return int(rows[min(k, len(rows) - 1)])


def sample_transition(policy: PolicyMatrix, state: int, rng: np.random.Generator) -> int:
    """Sample the next state from one policy column."""
    M = policy.matrix
    lo, hi = M.indptr[state], M.indptr[state + 1]
    return draw_from(M.indices[lo:hi], M.data[lo:hi], rng)


# ---------------------------------------------------------------------------
# returns


def _kl_column(a_rows, a_vals, p_rows, p_vals) -> float:
    """KL(a || p) over the support of a; a outside p's support is an error."""
    p_map = dict(zip(p_rows.tolist(), p_vals.tolist()))
    kl = 0.0
    for r, av in zip(a_rows.tolist(), a_vals.tolist()):
        if av <= 0.0:
            continue
        pv = p_map.get(r, 0.0)
        if pv <= 0.0:
            raise InvalidTrajectory(
                f"policy places mass {av:.3g} outside passive support (state {r})"
            )
        kl += av * math.log(av / pv)
    return kl


def episode_return(trajectory: Sequence[int], policy: PolicyMatrix, lmdp: Lmdp) -> float:
    """Total first-exit return of a trajectory under a fixed policy.

    Each interior visit contributes r(s) - lambda KL(a(.|s) || P(.|s)); the
    terminal boundary state contributes its reward.  The trajectory must end
    at a boundary state and every step must have positive policy probability.
    """
    states = list(trajectory)
    if len(states) < 1 or not lmdp.partition.is_boundary(states[-1]):
        raise InvalidTrajectory("trajectory must terminate at a boundary state")
    lam = lmdp.rewards.temperature
    P = lmdp.passive.full_matrix
    M = policy.matrix
    total = 0.0
    for t, s in enumerate(states[:-1]):
        if lmdp.partition.is_boundary(s):
            raise InvalidTrajectory(f"boundary state {s} visited before the end")
        lo, hi = M.indptr[s], M.indptr[s + 1]
        a_rows, a_vals = M.indices[lo:hi], M.data[lo:hi]
        nxt = states[t + 1]
        step_p = a_vals[a_rows == nxt]
        if step_p.size == 0 or step_p[0] <= 0:
            raise InvalidTrajectory(f"zero-probability step {s} -> {nxt}")
        plo, phi = P.indptr[s], P.indptr[s + 1]
        kl = _kl_column(a_rows, a_vals, P.indices[plo:phi], P.data[plo:phi])
        total += lmdp.rewards.interior[s] - lam * kl
    total += lmdp.rewards.boundary[states[-1] - lmdp.n_interior]
    return total
