"""Movable clutter as a multi-agent pathfinding problem, solved with
conflict-based search.

Each movable object becomes an agent on a 4-connected 1 cm grid over the
shelf with unit-time actions (wait, or move one cell). An agent's goal is
any cell where its footprint clears the negative goal region, the static
obstacles, and the shelf walls. Collisions between agents are checked on
their continuous footprints, not on cell identity: an agent occupies its
true (off-grid) pose until its first move, and cell centers afterwards.

This module never queries the physics simulator; it relies purely on
geometric collision checks.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry2d import (
    Footprint,
    GridMask,
    Pose2,
    Shape,
    footprint_overlaps_mask,
    overlap_grid,
    penetration_xy,
)
from .lattice import bfs_distance, blocked_mask, containment_mask, dilate_by_shape
from .retrieval import Ngr
from .scene import ObjectClass, Scene

DEFAULT_NODE_BUDGET = 100_000
LOW_LEVEL_EXPANSION_CAP = 200_000


class StartInvalidError(Exception):
    """An agent's current footprint overlaps a static obstacle; upstream
    state is corrupt."""


@dataclass(frozen=True)
class AgentPath:
    """Grid cells occupied per timestep until settlement. Empty means the
    agent never moves (legal only when its start already satisfies the
    negative goal region)."""

    cells: tuple[tuple[int, int], ...] = ()

    @property
    def cost(self) -> int:
        return max(0, len(self.cells) - 1)

    def first_move(self) -> int | None:
        for k, c in enumerate(self.cells):
            if c != self.cells[0]:
                return k
        return None


@dataclass(frozen=True)
class Constraint:
    """CBS constraint on a single agent: either 'not at cell at time t'
    (vertex) or 'do not arrive at cell from prev_cell at time t' (edge)."""

    t: int
    cell: tuple[int, int]
    prev_cell: tuple[int, int] | None = None  # None = vertex constraint

    @property
    def is_edge(self) -> bool:
        return self.prev_cell is not None


@dataclass(frozen=True)
class Conflict:
    t: int
    agents: tuple[int, int]
    kind: str  # "vertex" | "edge"
    cells: dict[int, tuple[int, int]]
    prev_cells: dict[int, tuple[int, int]] | None = None


class Agent:
    def __init__(
        self,
        oid: int,
        shape: Shape,
        theta: float,
        start_xy: tuple[float, float],
        start_cell: tuple[int, int],
        passable: np.ndarray,
        goal_ok: np.ndarray,
        h_field: np.ndarray,
        start_pose_ngr_free: bool,
    ):
        self.oid = oid
        self.shape = shape
        self.theta = theta
        self.circ = shape.circumradius()
        self.start_xy = start_xy
        self.start_cell = start_cell
        self.passable = passable
        self.goal_ok = goal_ok
        self.h_field = h_field
        self.start_pose_ngr_free = start_pose_ngr_free


@dataclass
class MapfProblem:
    grid: GridMask  # geometry of the shelf raster (bits unused here)
    agents: dict[int, Agent]
    static: list[Footprint]
    horizon: int


@dataclass
class MapfSolution:
    paths: dict[int, AgentPath]
    sum_of_costs: int
    nodes_expanded: int
    conflicts_split: int


def build_problem(scene: Scene, poses: dict[int, Pose2], ngr: Ngr) -> MapfProblem:
    """One agent per movable object at its latest pose; immovables and the
    target object become static obstacles."""
    grid = ngr.mask
    cx, cy = grid.cell_centers()
    static = [
        scene.object_by_id(o.id).footprint(poses[o.id])
        for o in scene.objects
        if o.klass in (ObjectClass.IMMOVABLE, ObjectClass.OOI)
    ]
    agents: dict[int, Agent] = {}
    for obj in sorted(scene.movables(), key=lambda o: o.id):
        pose = poses[obj.id]
        theta = pose.theta
        fp = Footprint(obj.shape, pose)
        for s in static:
            if penetration_xy(
                obj.shape, pose.x, pose.y, theta, s.shape, s.pose.x, s.pose.y, s.pose.theta
            ) is not None:
                raise StartInvalidError(f"agent {obj.id} starts overlapping a static obstacle")
        contain = containment_mask(
            obj.shape, theta, cx, cy,
            scene.shelf.min[0], scene.shelf.max[0], scene.shelf.min[1], scene.shelf.max[1],
        )
        passable = contain & ~blocked_mask(obj.shape, theta, cx, cy, static)
        goal_ok = passable & ~dilate_by_shape(grid, obj.shape, theta)
        h_field = bfs_distance(goal_ok, passable)
        i, j = grid.world_to_cell(pose.x, pose.y)
        start_cell = (min(max(i, 0), grid.width - 1), min(max(j, 0), grid.height - 1))
        agents[obj.id] = Agent(
            obj.id,
            obj.shape,
            theta,
            (pose.x, pose.y),
            start_cell,
            passable,
            goal_ok,
            h_field,
            start_pose_ngr_free=not footprint_overlaps_mask(fp, grid),
        )
    horizon = 4 * 2 * (grid.width + grid.height)
    return MapfProblem(grid, agents, static, horizon)


# ---------------------------------------------------------------------------
# Low level: space-time A* to any goal cell
# ---------------------------------------------------------------------------

_MOVES5 = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))


def low_level_search(
    problem: MapfProblem,
    oid: int,
    constraints: tuple[Constraint, ...] = (),
    deadline: float | None = None,
    avoid: list[tuple[float, list[tuple[float, float]]]] | None = None,
) -> AgentPath | None:
    """Minimum-cost space-time path to any goal cell, respecting the given
    constraints. Cost counts timesteps until the agent permanently settles;
    ties prefer fewer moves, then fewer soft collisions against the `avoid`
    table (other agents' current paths), then lexicographic cell order."""
    agent = problem.agents[oid]
    grid = problem.grid
    avoid = avoid or []

    def soft_hits(x: float, y: float, t: int) -> int:
        hits = 0
        for reach, pos_list in avoid:
            px, py = pos_list[t] if t < len(pos_list) else pos_list[-1]
            if (x - px) ** 2 + (y - py) ** 2 <= reach * reach:
                hits += 1
        return hits
    vset: set[tuple[int, tuple[int, int]]] = set()
    eset: set[tuple[int, tuple[int, int], tuple[int, int]]] = set()
    v_latest: dict[tuple[int, int], int] = {}
    for c in constraints:
        if c.is_edge:
            eset.add((c.t, c.prev_cell, c.cell))
        else:
            vset.add((c.t, c.cell))
            v_latest[c.cell] = max(v_latest.get(c.cell, -1), c.t)

    def can_settle(cell: tuple[int, int], t: int, unmoved: bool) -> bool:
        if unmoved:
            if not agent.start_pose_ngr_free:
                return False
        elif not agent.goal_ok[cell]:
            return False
        return v_latest.get(cell, -1) < t

    start = agent.start_cell
    w, h = agent.passable.shape
    h_field = agent.h_field
    start_state = (start, 0, True)
    counter = 0
    # The start cell is occupied at the agent's true pose, so it needs no
    # centered-passability; an inf heuristic there must not prune the root.
    h0 = h_field[start]
    if agent.start_pose_ngr_free or math.isinf(h0):
        h0 = 0.0
    heap: list[tuple[float, int, int, int, int, int, tuple]] = [
        (h0, 0, soft_hits(*agent.start_xy, 0), start[0], start[1], counter, start_state)
    ]
    parents: dict[tuple, tuple] = {}
    visited: set[tuple] = set()
    best_key: dict[tuple, tuple[int, int]] = {start_state: (0, 0)}
    expansions = 0

    while heap:
        f, moves, soft, _, _, _, state = heapq.heappop(heap)
        if state in visited:
            continue
        visited.add(state)
        cell, t, unmoved = state
        expansions += 1
        if expansions > LOW_LEVEL_EXPANSION_CAP:
            return None
        if deadline is not None and expansions % 2048 == 0 and time.monotonic() > deadline:
            return None

        if can_settle(cell, t, unmoved):
            if unmoved and t == 0:
                return AgentPath(())
            cells = [cell]
            s = state
            while s in parents:
                s = parents[s]
                cells.append(s[0])
            cells.reverse()
            return AgentPath(tuple(cells))

        if t >= problem.horizon:
            continue
        nt = t + 1
        for di, dj in _MOVES5:
            ni, nj = cell[0] + di, cell[1] + dj
            stay = di == 0 and dj == 0
            n_unmoved = unmoved and stay
            if not n_unmoved:
                if not (0 <= ni < w and 0 <= nj < h) or not agent.passable[ni, nj]:
                    continue
            ncell = (ni, nj)
            if (nt, ncell) in vset:
                continue
            if not stay and (nt, cell, ncell) in eset:
                continue
            nstate = (ncell, nt, n_unmoved)
            if nstate in visited:
                continue
            nmoves = moves + (0 if stay else 1)
            if n_unmoved:
                hv = h0
                nx, ny = agent.start_xy
            else:
                hv = h_field[ncell]
                if math.isinf(hv):
                    continue
                nx, ny = grid.cell_center(ni, nj)
            nsoft = soft + soft_hits(nx, ny, nt)
            prev = best_key.get(nstate)
            if prev is not None and prev <= (nmoves, nsoft):
                continue
            best_key[nstate] = (nmoves, nsoft)
            parents[nstate] = state
            counter += 1
            heapq.heappush(heap, (nt + hv, nmoves, nsoft, ni, nj, counter, nstate))
    return None


# ---------------------------------------------------------------------------
# Conflict detection
# ---------------------------------------------------------------------------


def agent_position(agent: Agent, path: AgentPath, grid: GridMask, t: int) -> tuple[float, float]:
    """True pose until the agent's first move, cell centers afterwards."""
    if not path.cells:
        return agent.start_xy
    fm = path.first_move()
    if fm is None or t < fm:
        return agent.start_xy
    cell = path.cells[min(t, len(path.cells) - 1)]
    return grid.cell_center(*cell)


def agent_cell(agent: Agent, path: AgentPath, t: int) -> tuple[int, int]:
    if not path.cells:
        return agent.start_cell
    return path.cells[min(t, len(path.cells) - 1)]


def _overlap_at(a: Agent, pa: tuple[float, float], b: Agent, pb: tuple[float, float]) -> bool:
    dx, dy = pa[0] - pb[0], pa[1] - pb[1]
    reach = a.circ + b.circ
    if dx * dx + dy * dy > reach * reach:
        return False
    return (
        penetration_xy(a.shape, pa[0], pa[1], a.theta, b.shape, pb[0], pb[1], b.theta) is not None
    )


def find_first_conflict(problem: MapfProblem, paths: dict[int, AgentPath]) -> Conflict | None:
    """Earliest conflict; ties broken by the lowest agent-id pair. Agents
    resting at their final cells keep colliding with later passers-by."""
    ids = sorted(paths)
    agents = problem.agents
    grid = problem.grid
    t_max = max((len(paths[i].cells) - 1 for i in ids if paths[i].cells), default=0)
    pos_cache: dict[int, list[tuple[float, float]]] = {
        i: [agent_position(agents[i], paths[i], grid, t) for t in range(t_max + 1)] for i in ids
    }
    for t in range(t_max + 1):
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                if _overlap_at(agents[a], pos_cache[a][t], agents[b], pos_cache[b][t]):
                    return Conflict(
                        t,
                        (a, b),
                        "vertex",
                        {
                            a: agent_cell(agents[a], paths[a], t),
                            b: agent_cell(agents[b], paths[b], t),
                        },
                    )
        if t == t_max:
            break
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                pa0, pa1 = pos_cache[a][t], pos_cache[a][t + 1]
                pb0, pb1 = pos_cache[b][t], pos_cache[b][t + 1]
                if pa0 == pa1 and pb0 == pb1:
                    continue
                mid_a = (0.5 * (pa0[0] + pa1[0]), 0.5 * (pa0[1] + pa1[1]))
                mid_b = (0.5 * (pb0[0] + pb1[0]), 0.5 * (pb0[1] + pb1[1]))
                if _overlap_at(agents[a], mid_a, agents[b], mid_b):
                    return Conflict(
                        t + 1,
                        (a, b),
                        "edge",
                        {
                            a: agent_cell(agents[a], paths[a], t + 1),
                            b: agent_cell(agents[b], paths[b], t + 1),
                        },
                        {
                            a: agent_cell(agents[a], paths[a], t),
                            b: agent_cell(agents[b], paths[b], t),
                        },
                    )
    return None


def _position_variants(agent: Agent, grid: GridMask, cell: tuple[int, int]) -> list[tuple[float, float]]:
    # an agent "at" its start cell may sit at its true pose (never moved yet)
    # or at the cell center (moved through); elsewhere only the center
    out = [grid.cell_center(*cell)]
    if cell == agent.start_cell:
        out.append(agent.start_xy)
    return out


def _placements_overlapping(
    problem: MapfProblem, mover: int, fixed: int, fixed_cell: tuple[int, int]
) -> list[tuple[int, int]]:
    """All grid placements of `mover` whose footprint overlaps `fixed`
    parked at fixed_cell (under every position variant, so forbidding them
    never prunes a conflict-free solution)."""
    grid = problem.grid
    m = problem.agents[mover]
    f = problem.agents[fixed]
    reach = m.circ + f.circ + grid.resolution
    out: np.ndarray | None = None
    fixed_fps = [
        Footprint(f.shape, Pose2(px, py, f.theta))
        for px, py in _position_variants(f, grid, fixed_cell)
    ]
    cx0, cy0 = grid.cell_center(*fixed_cell)
    i0 = max(0, int(math.floor((cx0 - reach - grid.origin[0]) / grid.resolution)))
    i1 = min(grid.width - 1, int(math.ceil((cx0 + reach - grid.origin[0]) / grid.resolution)))
    j0 = max(0, int(math.floor((cy0 - reach - grid.origin[1]) / grid.resolution)))
    j1 = min(grid.height - 1, int(math.ceil((cy0 + reach - grid.origin[1]) / grid.resolution)))
    xs = grid.origin[0] + (np.arange(i0, i1 + 1) + 0.5) * grid.resolution
    ys = grid.origin[1] + (np.arange(j0, j1 + 1) + 0.5) * grid.resolution
    wx, wy = np.meshgrid(xs, ys, indexing="ij")
    for fp in fixed_fps:
        hit = overlap_grid(m.shape, m.theta, wx, wy, fp)
        out = hit if out is None else (out & hit)
    cells = [(int(i) + i0, int(j) + j0) for i, j in zip(*np.nonzero(out))]
    # the mover's own start cell stands for two possible positions; keep it
    # only when the true pose conflicts as well
    sc = m.start_cell
    if sc in cells:
        tx, ty = m.start_xy
        for fp in fixed_fps:
            if penetration_xy(m.shape, tx, ty, m.theta, fp.shape, fp.pose.x, fp.pose.y, fp.pose.theta) is None:
                cells.remove(sc)
                break
    return sorted(cells)


def _split(problem: MapfProblem, conflict: Conflict) -> list[tuple[int, tuple[Constraint, ...]]]:
    """Two children: the lower-id agent is forbidden from every placement
    overlapping the other agent parked at its conflict cell; the other agent
    is forbidden from that cell alone."""
    a, b = conflict.agents
    t = conflict.t
    if conflict.kind == "edge":
        out = []
        for oid in (a, b):
            prev = conflict.prev_cells[oid]
            if prev == conflict.cells[oid]:
                out.append((oid, (Constraint(t, conflict.cells[oid]),)))
            else:
                out.append((oid, (Constraint(t, conflict.cells[oid], prev_cell=prev),)))
        return out
    cells_a = _placements_overlapping(problem, a, b, conflict.cells[b])
    if conflict.cells[a] not in cells_a:
        cells_a.append(conflict.cells[a])
    return [
        (a, tuple(Constraint(t, c) for c in sorted(cells_a))),
        (b, (Constraint(t, conflict.cells[b]),)),
    ]


# ---------------------------------------------------------------------------
# High level: conflict tree
# ---------------------------------------------------------------------------


def _avoid_table(
    problem: MapfProblem, paths: dict[int, AgentPath], skip: int
) -> list[tuple[float, list[tuple[float, float]]]]:
    """Other agents' positions over time, used as a soft-collision bias for
    the low level (circumradius proximity, not exact footprints)."""
    me = problem.agents[skip]
    out = []
    for oid in sorted(paths):
        if oid == skip:
            continue
        ag = problem.agents[oid]
        path = paths[oid]
        if not path.cells:
            pos_list = [ag.start_xy]
        else:
            fm = path.first_move()
            pos_list = [
                ag.start_xy if (fm is None or t < fm) else problem.grid.cell_center(*path.cells[t])
                for t in range(len(path.cells))
            ]
        out.append((ag.circ + me.circ, pos_list))
    return out


def cbs_solve(
    problem: MapfProblem,
    node_budget: int = DEFAULT_NODE_BUDGET,
    deadline: float | None = None,
) -> MapfSolution | None:
    """Best-first conflict-tree search on sum-of-costs. Returns None on tree
    exhaustion, node budget, or deadline."""
    ids = sorted(problem.agents)
    start_paths = {oid: AgentPath(()) for oid in ids}
    root_paths: dict[int, AgentPath] = {}
    for oid in ids:
        p = low_level_search(
            problem, oid, (), deadline=deadline, avoid=_avoid_table(problem, start_paths, oid)
        )
        if p is None:
            return None
        root_paths[oid] = p

    counter = 0
    root_cost = sum(p.cost for p in root_paths.values())
    heap: list[tuple[int, int, dict, dict]] = [(root_cost, counter, {}, root_paths)]
    expanded = 0
    splits = 0
    while heap:
        cost, _, cons, paths = heapq.heappop(heap)
        expanded += 1
        if expanded > node_budget:
            return None
        if deadline is not None and time.monotonic() > deadline:
            return None
        conflict = find_first_conflict(problem, paths)
        if conflict is None:
            return MapfSolution(paths, cost, expanded, splits)
        splits += 1
        for oid, extra in _split(problem, conflict):
            new_c = cons.get(oid, ()) + extra
            new_path = low_level_search(
                problem, oid, new_c, deadline=deadline, avoid=_avoid_table(problem, paths, oid)
            )
            if new_path is None:
                continue
            n_cons = dict(cons)
            n_cons[oid] = new_c
            n_paths = dict(paths)
            n_paths[oid] = new_path
            counter += 1
            heapq.heappush(heap, (sum(p.cost for p in n_paths.values()), counter, n_cons, n_paths))
    return None
