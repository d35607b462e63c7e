"""Top-level planners producing a validated trajectory sequence within a
planning budget.

Three strategies over the same primitives (retrieval planner, clutter
pathfinding, sampled pushes, push simulation):

  iterative     plan a clutter-free retrieval first; while that fails,
                alternate between solving the clutter-escape pathfinding
                problem on the latest poses and committing the first
                simulation-valid push it suggests.
  single-mapf   identical, but the pathfinding problem is solved exactly
                once; later pushes keep chasing those original goals.
  ngr-recursive rearrange one overlapping object at a time toward the
                closest cell outside the (growing) swept region, freezing
                each successfully moved object as an obstacle.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import yaml

from .geometry2d import Footprint, GridMask, Pose2, footprint_overlaps_mask, rasterize_sweep
from .lattice import blocked_mask, containment_mask, dilate_by_shape
from .mapf import AgentPath, MapfSolution, build_problem, cbs_solve
from .push import PushPlan, plan_push
from .retrieval import Ngr, NGR_INFLATION, Retrieval, RetrievalQuery, compute_ngr, plan_retrieval
from .scene import ParseError, Scene
from .sim import SimReport, SimState, Trajectory, Waypoint, simulate_push_trajectory

DEFAULT_TIMEOUT_S = 120.0
PLAN_FORMAT_VERSION = 1
# a committed push must actually have moved its target this far
MIN_PUSH_DISPLACEMENT = 1e-6


class Algorithm(str, Enum):
    ITERATIVE = "iterative"
    SINGLE_MAPF = "single-mapf"
    NGR_RECURSIVE = "ngr-recursive"


@dataclass(frozen=True)
class SolverConfig:
    timeout_s: float = DEFAULT_TIMEOUT_S
    algorithm: Algorithm = Algorithm.ITERATIVE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.timeout_s <= 0.0:
            raise ValueError("timeout must be > 0")


@dataclass
class PlanStats:
    planning_time: float = 0.0
    sim_time: float = 0.0
    cbs_calls: int = 0
    pushes_executed: int = 0
    success: bool = False
    failure_reason: str = ""
    duplicate_mapf_queries: int = 0  # instrumentation; must stay 0


@dataclass
class Plan:
    trajectories: tuple[Trajectory, ...]
    stats: PlanStats


def _mix(*parts: int) -> int:
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (p & 0xFFFFFFFFFFFFFFFF)) * 0xBF58476D1CE4E5B9 % (1 << 64)
    return h >> 1


def _pose_key(poses: dict[int, Pose2]) -> tuple:
    return tuple((oid, p.x, p.y, p.theta) for oid, p in sorted(poses.items()))


class _Run:
    """Shared bookkeeping for one solve: deadline, stats, simulation timing."""

    def __init__(self, scene: Scene, cfg: SolverConfig):
        self.scene = scene
        self.cfg = cfg
        self.t0 = time.monotonic()
        self.deadline = self.t0 + cfg.timeout_s
        self.stats = PlanStats()
        self.trajectories: list[Trajectory] = []

    def time_left(self) -> bool:
        return time.monotonic() < self.deadline

    def simulate(self, state: SimState, traj: Trajectory) -> SimReport:
        t = time.monotonic()
        report = simulate_push_trajectory(self.scene, state, traj)
        self.stats.sim_time += time.monotonic() - t
        return report

    def finish(self, success: bool, reason: str = "") -> Plan:
        self.stats.success = success
        self.stats.failure_reason = "" if success else reason
        self.stats.planning_time = time.monotonic() - self.t0
        return Plan(tuple(self.trajectories), self.stats)


def solve(scene: Scene, cfg: SolverConfig) -> Plan:
    if cfg.algorithm is Algorithm.ITERATIVE:
        return _solve_iterative(scene, cfg, single_mapf=False)
    if cfg.algorithm is Algorithm.SINGLE_MAPF:
        return _solve_iterative(scene, cfg, single_mapf=True)
    return _solve_recursive(scene, cfg)


def _immovable_ids(scene: Scene) -> frozenset[int]:
    return frozenset(o.id for o in scene.immovables())


def _all_but_ooi(scene: Scene) -> frozenset[int]:
    return frozenset(o.id for o in scene.objects if o.id != scene.ooi.id)


def _try_final_retrieval(run: _Run, state: SimState) -> bool:
    r = plan_retrieval(
        RetrievalQuery(run.scene, _all_but_ooi(run.scene), poses=state.poses),
        deadline=run.deadline,
    )
    if r is None:
        return False
    run.trajectories.extend([r.enter, r.exit])
    return True


def _order_for_push(sol: MapfSolution) -> list[int]:
    # most-displaced object first; the paper leaves the order open
    moving = [(oid, p) for oid, p in sol.paths.items() if p.cells]
    moving.sort(key=lambda item: (-len(item[1].cells), item[0]))
    return [oid for oid, _ in moving]


def _solve_iterative(scene: Scene, cfg: SolverConfig, single_mapf: bool) -> Plan:
    run = _Run(scene, cfg)
    base = plan_retrieval(
        RetrievalQuery(scene, _immovable_ids(scene)), deadline=run.deadline
    )
    if base is None:
        return run.finish(False, "no retrieval exists even without clutter")
    ngr = compute_ngr(scene, base)

    state = SimState(scene.initial_poses(), 0.0)
    replan = True
    sol: MapfSolution | None = None
    order: list[int] = []
    goal_cells: dict[int, tuple[int, int]] = {}
    start_ngr_free: dict[int, bool] = {}
    seen_pose_keys: set[tuple] = set()
    pass_idx = 0

    while run.time_left():
        if replan:
            if _try_final_retrieval(run, state):
                return run.finish(True)
            if sol is None or not single_mapf:
                key = _pose_key(state.poses)
                if key in seen_pose_keys:
                    run.stats.duplicate_mapf_queries += 1
                seen_pose_keys.add(key)
                problem = build_problem(scene, state.poses, ngr)
                run.stats.cbs_calls += 1
                new_sol = cbs_solve(problem, deadline=run.deadline)
                if new_sol is None and sol is None:
                    return run.finish(False, "clutter pathfinding found no rearrangement")
                if new_sol is not None:
                    # a failed tree search only fails this iteration; keep
                    # pushing along the previous solution otherwise
                    sol = new_sol
                    order = _order_for_push(sol)
                    goal_cells = {oid: sol.paths[oid].cells[-1] for oid in order}
                    start_ngr_free = {
                        oid: problem.agents[oid].start_pose_ngr_free for oid in order
                    }
            replan = False

        pushed = False
        for oid in order:
            if not run.time_left():
                break
            path = _current_path_for(
                scene, state, sol, oid, ngr, goal_cells, start_ngr_free, single_mapf
            )
            if path is None:
                continue
            seed = _mix(cfg.seed, pass_idx, oid)
            pp = plan_push(oid, path, scene, state.poses, ngr.mask, seed, deadline=run.deadline)
            if pp is None:
                continue
            traj = pp.combined()
            report = run.simulate(state, traj)
            if report.valid and _moved(state, report.final, oid):
                run.trajectories.append(traj)
                state = SimState(report.final.poses, 0.0)
                run.stats.pushes_executed += 1
                replan = True
                pushed = True
                break
        pass_idx += 1
        if not pushed and not replan and not run.time_left():
            break
    return run.finish(False, "timeout")


def _moved(before: SimState, after: SimState, oid: int) -> bool:
    a, b = before.poses[oid], after.poses[oid]
    return math.hypot(a.x - b.x, a.y - b.y) > MIN_PUSH_DISPLACEMENT


def _current_path_for(
    scene: Scene,
    state: SimState,
    sol: MapfSolution,
    oid: int,
    ngr: Ngr,
    goal_cells: dict[int, tuple[int, int]],
    start_ngr_free: dict[int, bool],
    single_mapf: bool,
) -> AgentPath | None:
    if not single_mapf:
        return sol.paths[oid]
    # chasing the original goal: rebuild a straight grid path from the
    # object's current cell, and stop once the original purpose is met
    obj = scene.object_by_id(oid)
    fp = obj.footprint(state.poses[oid])
    grid = ngr.mask
    cur = grid.world_to_cell(state.poses[oid].x, state.poses[oid].y)
    goal = goal_cells[oid]
    if start_ngr_free[oid]:
        if max(abs(cur[0] - goal[0]), abs(cur[1] - goal[1])) <= 1:
            return None
    elif not footprint_overlaps_mask(fp, grid):
        return None
    return AgentPath(tuple(_grid_line(cur, goal)))


def _grid_line(a: tuple[int, int], b: tuple[int, int]) -> list[tuple[int, int]]:
    cells = [a]
    i, j = a
    while i != b[0]:
        i += 1 if b[0] > i else -1
        cells.append((i, j))
    while j != b[1]:
        j += 1 if b[1] > j else -1
        cells.append((i, j))
    return cells


# ---------------------------------------------------------------------------
# Recursive negative-goal-region baseline
# ---------------------------------------------------------------------------


def _closest_free_cell(
    scene: Scene, oid: int, poses: dict[int, Pose2], ngr_mask: GridMask, frozen: set[int]
) -> tuple[int, int] | None:
    """Closest cell (euclidean from the object's centroid, ties lexicographic)
    whose footprint placement clears the grown swept region, the immovables,
    and the frozen objects."""
    obj = scene.object_by_id(oid)
    pose = poses[oid]
    cx, cy = ngr_mask.cell_centers()
    static = [o.footprint(poses[o.id]) for o in scene.objects if o.klass.value in ("immovable", "ooi")]
    static += [scene.object_by_id(f).footprint(poses[f]) for f in sorted(frozen) if f != oid]
    ok = containment_mask(
        obj.shape, pose.theta, cx, cy,
        scene.shelf.min[0], scene.shelf.max[0], scene.shelf.min[1], scene.shelf.max[1],
    )
    ok &= ~blocked_mask(obj.shape, pose.theta, cx, cy, static)
    ok &= ~dilate_by_shape(ngr_mask, obj.shape, pose.theta)
    if not ok.any():
        return None
    ii, jj = np.nonzero(ok)
    d2 = (cx[ii, jj] - pose.x) ** 2 + (cy[ii, jj] - pose.y) ** 2
    best = None
    for k in range(len(ii)):
        key = (float(d2[k]), int(ii[k]), int(jj[k]))
        if best is None or key < best:
            best = key
    return (best[1], best[2])


def _solve_recursive(scene: Scene, cfg: SolverConfig) -> Plan:
    run = _Run(scene, cfg)
    base = plan_retrieval(RetrievalQuery(scene, _immovable_ids(scene)), deadline=run.deadline)
    if base is None:
        return run.finish(False, "no retrieval exists even without clutter")
    ngr_mask = compute_ngr(scene, base).mask.copy()

    state = SimState(scene.initial_poses(), 0.0)
    frozen: set[int] = set()
    dead: set[int] = set()
    pass_idx = 0

    while run.time_left():
        overlapping = [
            o.id
            for o in scene.movables()
            if footprint_overlaps_mask(o.footprint(state.poses[o.id]), ngr_mask)
        ]
        workable = [oid for oid in overlapping if oid not in frozen and oid not in dead]
        if not overlapping:
            if _try_final_retrieval(run, state):
                return run.finish(True)
            return run.finish(False, "clearance reached but no final retrieval")
        if not workable:
            return run.finish(False, "recursion dead-end: remaining overlaps are frozen")

        pushed = False
        for oid in workable:
            if not run.time_left():
                break
            goal = _closest_free_cell(scene, oid, state.poses, ngr_mask, frozen)
            if goal is None:
                dead.add(oid)
                continue
            cur = ngr_mask.world_to_cell(state.poses[oid].x, state.poses[oid].y)
            path = AgentPath(tuple(_grid_line(cur, goal)))
            seed = _mix(cfg.seed, pass_idx, oid, 0xD06A)
            pp = plan_push(oid, path, scene, state.poses, ngr_mask, seed, deadline=run.deadline)
            if pp is None:
                continue
            traj = pp.combined()
            report = run.simulate(state, traj)
            if not report.valid or not _moved(state, report.final, oid):
                continue
            if any(_moved(state, report.final, f) for f in frozen):
                continue  # rearranged objects are treated as immovable
            obj = scene.object_by_id(oid)
            sweep = _object_sweep_poses(state.poses[oid], report.final.poses[oid])
            ngr_mask = rasterize_sweep(sweep, obj.shape.inflated(NGR_INFLATION), ngr_mask)
            run.trajectories.append(traj)
            state = SimState(report.final.poses, 0.0)
            run.stats.pushes_executed += 1
            frozen.add(oid)
            pushed = True
            break
        pass_idx += 1
        if not pushed and all(oid in dead for oid in workable):
            return run.finish(False, "recursion dead-end: no placement targets")
    return run.finish(False, "timeout")


def _object_sweep_poses(a: Pose2, b: Pose2) -> list[Pose2]:
    return [a, Pose2(b.x, b.y, a.theta)]


# ---------------------------------------------------------------------------
# Plan files (same structured-text family as scenes)
# ---------------------------------------------------------------------------


def save_plan(plan: Plan) -> str:
    doc = {
        "format_version": PLAN_FORMAT_VERSION,
        "success": plan.stats.success,
        "stats": {
            "planning_time_s": plan.stats.planning_time,
            "sim_time_s": plan.stats.sim_time,
            "cbs_calls": plan.stats.cbs_calls,
            "pushes": plan.stats.pushes_executed,
        },
        "trajectories": [
            {
                "attached_ooi": t.attached_ooi,
                "waypoints": [[w.pose.x, w.pose.y, w.pose.theta, w.t] for w in t.waypoints],
            }
            for t in plan.trajectories
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False)


def load_plan(text: str) -> Plan:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != PLAN_FORMAT_VERSION:
        raise ParseError("not a plan document (bad format_version)")
    try:
        trajectories = []
        for td in doc["trajectories"]:
            wps = tuple(
                Waypoint(Pose2(float(x), float(y), float(th)), float(t))
                for x, y, th, t in td["waypoints"]
            )
            trajectories.append(Trajectory(wps, attached_ooi=bool(td["attached_ooi"])))
        stats = PlanStats(
            planning_time=float(doc.get("stats", {}).get("planning_time_s", 0.0)),
            sim_time=float(doc.get("stats", {}).get("sim_time_s", 0.0)),
            cbs_calls=int(doc.get("stats", {}).get("cbs_calls", 0)),
            pushes_executed=int(doc.get("stats", {}).get("pushes", 0)),
            success=bool(doc.get("success", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed plan document: {exc!r}") from exc
    return Plan(tuple(trajectories), stats)
