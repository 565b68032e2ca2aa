"""Command-line front end.

Subcommands: solve, blend, stack, simulate, learn, bench.  Domain configs
are JSON documents (see load_domain); every command writes its artifacts
plus a manifest.json into --out.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure, 4 solver hit its sweep budget (partial output
is still written).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import serialize
from .bench import ring_scaling
from .core import (Lmdp, solve_direct, value_from_desirability, z_iterate)
from .domains import (ArmSpec, GridSpec, RingSpec, boundary_goal_tasks,
                      four_rooms_map, goal_task_vector, grid_from_ascii,
                      make_arm, make_grid, make_ring)
from .errors import (AllZeroColumn, AlreadyTerminated, BlockedCell,
                     CannotTerminateBase, DegenerateBasis, DimensionMismatch,
                     EmptyTarget, InvalidSpec, InvalidTrajectory,
                     NoAbsorption, NonPositiveComposite,
                     NonPositiveDesirability, NoTaskSet, NotStochastic,
                     RewardOverflow, SingularFundamentalMatrix,
                     SingularSystem, ZeroNormalizer)
from .executor import run_episode
from .hierarchy import SubtaskStructure, build_stack
from .learning import train
from .multitask import build_task_basis, solve_novel_task

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NO_CONVERGENCE = 4

CONFIG_ERRORS = (InvalidSpec, DimensionMismatch, NotStochastic, NoAbsorption,
                 BlockedCell, EmptyTarget, RewardOverflow)
NUMERICAL_ERRORS = (SingularSystem, SingularFundamentalMatrix, ZeroNormalizer,
                    NonPositiveDesirability, NonPositiveComposite,
                    DegenerateBasis, AllZeroColumn, InvalidTrajectory,
                    NoTaskSet, CannotTerminateBase, AlreadyTerminated)


@dataclass
class DomainBundle:
    """Everything a command might need, assembled from one config file."""

    config: dict
    lmdp: Lmdp
    task_matrix: Optional[np.ndarray]
    structures: List[SubtaskStructure]
    goal_q: Optional[np.ndarray]
    start_state: Optional[int]
    basis: Optional[object] = None  # pre-solved TaskBasis (arm only)


def _replace_spec(spec, config, fields):
    updates = {k: config[k] for k in fields if k in config}
    return dataclasses.replace(spec, **updates) if updates else spec


def load_domain(path) -> DomainBundle:
    """Read a domain config JSON and build its LMDP, tasks, and structures.

    Schemas by "type":
      ring: n_states plus optional RingSpec fields, goal (twin index),
            start (state index).
      grid: map (inline ASCII) or four_rooms (odd size); optional GridSpec
            probability/temperature overrides, subtask_cells, goal [r,c],
            start [r,c].
      arm:  n_bins plus optional ArmSpec fields, start (config index).
      lmdp: inline document under "lmdp" or a path under "lmdp_file".
    Any command-specific parameters (learn, max_steps) ride along in the
    config document.
    """
    path = Path(path)
    config = serialize.read_json(path)
    kind = config.get("type")
    if kind == "ring":
        fields = {f.name for f in dataclasses.fields(RingSpec)}
        spec = RingSpec(**{k: config[k] for k in fields if k in config})
        lmdp, structures, tasks = make_ring(spec)
        goal = int(config.get("goal", 0))
        if not 0 <= goal < lmdp.n_boundary:
            raise InvalidSpec(f"goal twin {goal} out of range")
        goal_q = goal_task_vector(lmdp.n_boundary, goal, spec.temperature)
        start = config.get("start")
        return DomainBundle(config, lmdp, tasks, structures, goal_q,
                            None if start is None else int(start))
    if kind == "grid":
        if "map" in config:
            text = config["map"]
        elif "four_rooms" in config:
            text = four_rooms_map(int(config["four_rooms"]))
        else:
            raise InvalidSpec("grid config needs a map or a four_rooms size")
        spec, map_subtasks = grid_from_ascii(text, config.get("goal_cells"))
        spec = _replace_spec(spec, config,
                             ("stay_prob", "step_prob", "exit_prob",
                              "temperature", "interior_reward"))
        subtasks = [tuple(c) for c in config.get("subtask_cells", map_subtasks)]
        goal = tuple(config["goal"]) if "goal" in config else None
        lmdp, structure, goal_q = make_grid(spec, subtasks, goal)
        start = None
        if "start" in config:
            cell = tuple(config["start"])
            free = spec.free_cells()
            if cell not in free:
                raise BlockedCell(f"start cell {cell} is not free")
            start = free.index(cell)
        tasks = boundary_goal_tasks(lmdp.n_boundary, spec.temperature)
        structures = [structure] if structure is not None else []
        return DomainBundle(config, lmdp, tasks, structures, goal_q, start)
    if kind == "arm":
        fields = {f.name for f in dataclasses.fields(ArmSpec)}
        kwargs = {k: config[k] for k in fields if k in config}
        if "link_lengths" in kwargs:
            kwargs["link_lengths"] = tuple(kwargs["link_lengths"])
        if "target_rect" in kwargs:
            kwargs["target_rect"] = tuple(kwargs["target_rect"])
        spec = ArmSpec(**kwargs)
        lmdp, basis, target_q = make_arm(spec)
        start = config.get("start")
        bundle = DomainBundle(config, lmdp, basis.boundary_tasks, [], target_q,
                              None if start is None else int(start))
        bundle.basis = basis
        return bundle
    if kind == "lmdp":
        if "lmdp" in config:
            doc = config["lmdp"]
        elif "lmdp_file" in config:
            doc = serialize.read_json(path.parent / config["lmdp_file"])
        else:
            raise InvalidSpec("lmdp config needs an inline document or a file")
        lmdp = serialize.lmdp_from_dict(doc)
        start = config.get("start")
        return DomainBundle(config, lmdp, None, [], None,
                            None if start is None else int(start))
    raise InvalidSpec(f"unknown domain type {kind!r}")


def _bundle_basis(bundle: DomainBundle):
    if bundle.basis is not None:
        return bundle.basis
    if bundle.task_matrix is None:
        raise InvalidSpec("this domain defines no task basis")
    return build_task_basis(bundle.lmdp, bundle.task_matrix)


def _bellman_residual(lmdp: Lmdp, z_interior: np.ndarray,
                      q_boundary: np.ndarray) -> float:
    applied = lmdp.q_interior * (lmdp.passive.to_interior.T @ z_interior
                                 + lmdp.passive.to_boundary.T @ q_boundary)
    return float(np.max(np.abs(applied - z_interior), initial=0.0))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    bundle = load_domain(args.domain)
    lmdp = bundle.lmdp
    out = _out_dir(args)
    if args.method == "direct":
        z = solve_direct(lmdp)
        z_full = z.full()
        iterations = None
        converged = True
    else:
        z_i, iterations, converged = z_iterate(
            lmdp, lmdp.q_boundary, tol=args.tol, max_iter=args.max_iter)
        z_full = np.concatenate([z_i, lmdp.q_boundary])
    residual = _bellman_residual(lmdp, z_full[:lmdp.n_interior],
                                 z_full[lmdp.n_interior:])
    serialize.save_text(out / "z.csv",
                        serialize.desirability_csv_raw(lmdp, z_full))
    manifest = serialize.run_manifest(
        "solve", bundle.config, args.seed, method=args.method,
        tol=args.tol if args.method == "z-iter" else None,
        iterations=iterations, converged=converged, residual=residual)
    serialize.write_json(out / "manifest.json", manifest)
    if not converged:
        print(f"z-iteration hit max_iter={args.max_iter} "
              f"(residual {residual:.3g}); partial output written",
              file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_blend(args) -> int:
    bundle = load_domain(args.domain)
    if bundle.goal_q is None:
        raise InvalidSpec("this domain defines no target task to blend")
    basis = _bundle_basis(bundle)
    method = args.method.replace("blend-", "")
    z, weights = solve_novel_task(basis, bundle.goal_q, method=method)
    out = _out_dir(args)
    serialize.save_text(out / "weights.csv", serialize.weights_csv(weights))
    serialize.save_text(out / "z.csv",
                        serialize.desirability_csv(bundle.lmdp, z))
    manifest = serialize.run_manifest(
        "blend", bundle.config, args.seed, method=args.method,
        blend_residual=weights.residual,
        n_tasks=basis.n_tasks)
    serialize.write_json(out / "manifest.json", manifest)
    return EXIT_OK


def _build_stack(bundle: DomainBundle, kappa, penalty):
    if not bundle.structures:
        raise InvalidSpec("this domain defines no subtask structure to stack")
    basis = _bundle_basis(bundle)
    return build_stack(basis, bundle.structures, kappa=kappa, penalty=penalty)


def cmd_stack(args) -> int:
    bundle = load_domain(args.domain)
    stack = _build_stack(bundle, args.kappa, args.penalty)
    out = _out_dir(args)
    serialize.save_stack(stack, out / "stack")
    manifest = serialize.run_manifest(
        "stack", bundle.config, args.seed, depth=stack.depth,
        kappa=stack.kappa, penalty=stack.penalty)
    serialize.write_json(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_simulate(args) -> int:
    bundle = load_domain(args.domain)
    if bundle.goal_q is None:
        raise InvalidSpec("this domain defines no goal task to simulate")
    stack = _build_stack(bundle, args.kappa, args.penalty)
    stack.set_task(bundle.goal_q)
    start = bundle.start_state if bundle.start_state is not None else 0
    max_steps = bundle.config.get("max_steps")
    rng = np.random.default_rng(args.seed)
    trajectory = run_episode(stack, start, rng, max_steps=max_steps)
    out = _out_dir(args)
    serialize.save_text(out / "trajectory.csv",
                        serialize.trajectory_csv(trajectory))
    serialize.save_text(out / "weights_snapshots.csv",
                        serialize.snapshots_csv(trajectory))
    manifest = serialize.run_manifest(
        "simulate", bundle.config, args.seed,
        total_return=trajectory.total_return,
        length=trajectory.length,
        truncated=trajectory.truncated,
        n_events=len(trajectory.events))
    serialize.write_json(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_learn(args) -> int:
    bundle = load_domain(args.domain)
    if bundle.goal_q is None:
        raise InvalidSpec("this domain defines no goal task to learn")
    params = bundle.config.get("learn", {})
    epochs = int(params.get("epochs", 20))
    episodes = int(params.get("episodes", 10))
    n_seeds = int(params.get("n_seeds", 1))
    max_steps = params.get("max_steps")
    step_scale = float(params.get("step_scale", 50.0))
    conditions = params.get("conditions", ["flat", "guided"])
    stack_template = None
    if "guided" in conditions:
        stack_template = _build_stack(bundle, None, None)
    entries = []
    for offset in range(n_seeds):
        seed = args.seed + offset
        for condition in conditions:
            if condition == "flat":
                _, curve = train(bundle.lmdp, bundle.goal_q, epochs, episodes,
                                 seed, start_state=bundle.start_state,
                                 max_steps=max_steps, step_scale=step_scale)
            elif condition == "guided":
                _, curve = train(bundle.lmdp, bundle.goal_q, epochs, episodes,
                                 seed, stack=stack_template,
                                 start_state=bundle.start_state,
                                 max_steps=max_steps, step_scale=step_scale)
            else:
                raise InvalidSpec(f"unknown learning condition {condition!r}")
            entries.extend((epoch, mean, se, condition, seed)
                           for epoch, mean, se in curve)
    out = _out_dir(args)
    serialize.save_text(out / "curve.csv", serialize.curve_csv(entries))
    manifest = serialize.run_manifest(
        "learn", bundle.config, args.seed, epochs=epochs, episodes=episodes,
        n_seeds=n_seeds, conditions=list(conditions))
    serialize.write_json(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = [int(tok) for tok in args.sizes.split(",") if tok.strip()]
    rows, slopes = ring_scaling(sizes, tol=args.tol)
    out = _out_dir(args)
    serialize.save_text(out / "scaling.csv", serialize.scaling_csv(rows))
    config = {"sizes": sizes, "tol": args.tol}
    manifest = serialize.run_manifest("bench", config, args.seed,
                                      slopes=slopes)
    serialize.write_json(out / "manifest.json", manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument surface


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsmdp",
        description="First-exit linearly solvable MDPs: solvers, task "
                    "blending, subtask hierarchies, and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, domain=True):
        if domain:
            p.add_argument("--domain", required=True,
                           help="domain config JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("solve", help="solve one LMDP for its desirability")
    common(p)
    p.add_argument("--method", choices=["direct", "z-iter"], default="direct")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=1_000_000)

    p = sub.add_parser("blend", help="compose a novel task from a basis")
    common(p)
    p.add_argument("--method",
                   choices=["blend-nnls", "blend-pinv", "nnls", "pinv"],
                   default="blend-nnls")

    p = sub.add_parser("stack", help="build and serialize a subtask tower")
    common(p)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--penalty", type=float, default=None)

    p = sub.add_parser("simulate", help="run one hierarchical episode")
    common(p)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--penalty", type=float, default=None)

    p = sub.add_parser("learn", help="online desirability learning curves")
    common(p)

    p = sub.add_parser("bench", help="ring scaling benchmark")
    common(p, domain=False)
    p.add_argument("--sizes", required=True,
                   help="comma-separated ring sizes, e.g. 16,32,64")
    p.add_argument("--tol", type=float, default=1e-10)
    return parser


COMMANDS = {
    "solve": cmd_solve,
    "blend": cmd_blend,
    "stack": cmd_stack,
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
