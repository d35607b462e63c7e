"""Turn one agent's grid path into an executable push: shortcut the path
against immovable obstacles, aim the gripper at the trailing face of the
object's bounding box, sample perturbed waypoints, and plan a collision-free
approach from home to the push start."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .geometry2d import Footprint, GridMask, Pose2, Shape, ShapeKind, ray_aabb_intersect
from .lattice import AnchoredLattice, DeadlineExceeded, blocked_mask, containment_mask, weighted_astar
from .mapf import AgentPath
from .scene import ObjectClass, Scene
from .sim import GRIPPER_SPEED, Trajectory, Waypoint

PUSH_SIGMA = 0.025
RETRY_BUDGET = 8
GRID_RES = 0.01
SWEEP_INFLATION = GRID_RES / 2.0


class DegenerateDirectionError(Exception):
    """The first two shortcut points coincide; no push direction exists."""


@dataclass(frozen=True)
class ShortcutPath:
    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class PushPlan:
    approach: Trajectory  # home to the push start, collision-free
    push: Trajectory  # straight segments through the sampled waypoints
    target_object: int

    def combined(self) -> Trajectory:
        """Approach and push concatenated on one timeline."""
        t0 = self.approach.duration
        wps = list(self.approach.waypoints)
        for w in self.push.waypoints:
            t = t0 + w.t
            if t <= wps[-1].t + 1e-12:
                continue
            wps.append(Waypoint(w.pose, t))
        return Trajectory(tuple(wps), attached_ooi=False)


# ---------------------------------------------------------------------------
# Segment clearance
# ---------------------------------------------------------------------------


def _seg_point_dist(ax, ay, bx, by, px, py) -> float:
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 < 1e-24:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _seg_intersects_aabb(ax, ay, bx, by, hx, hy) -> bool:
    # Liang-Barsky clip of the segment against [-hx, hx] x [-hy, hy]
    dx, dy = bx - ax, by - ay
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, ax + hx), (dx, hx - ax), (-dy, ay + hy), (dy, hy - ay)):
        if abs(p) < 1e-15:
            if q < 0.0:
                return False
        else:
            r = q / p
            if p < 0.0:
                t0 = max(t0, r)
            else:
                t1 = min(t1, r)
            if t0 > t1:
                return False
    return True


def segment_footprint_distance(
    a: tuple[float, float], b: tuple[float, float], fp: Footprint
) -> float:
    """Minimum distance between the segment [a, b] and the footprint
    (0 when they intersect)."""
    if fp.shape.kind is ShapeKind.CIRCLE:
        d = _seg_point_dist(a[0], a[1], b[0], b[1], fp.pose.x, fp.pose.y)
        return max(0.0, d - fp.shape.radius)
    c, s = math.cos(fp.pose.theta), math.sin(fp.pose.theta)

    def to_frame(px, py):
        dx, dy = px - fp.pose.x, py - fp.pose.y
        return (c * dx + s * dy, -s * dx + c * dy)

    hx, hy = fp.shape.half_extents
    la = to_frame(*a)
    lb = to_frame(*b)
    if _seg_intersects_aabb(la[0], la[1], lb[0], lb[1], hx, hy):
        return 0.0
    best = math.inf
    for px, py in (la, lb):
        qx = min(max(px, -hx), hx)
        qy = min(max(py, -hy), hy)
        best = min(best, math.hypot(px - qx, py - qy))
    for sx in (-hx, hx):
        for sy in (-hy, hy):
            best = min(best, _seg_point_dist(la[0], la[1], lb[0], lb[1], sx, sy))
    return best


def shortcut_path(
    points: list[tuple[float, float]],
    immovables: list[Footprint],
    object_shape: Shape,
    object_theta: float,
    scene: Scene,
) -> ShortcutPath:
    """Greedy farthest-visible shortcutting: a segment is usable when,
    inflated by the pushed object's circumradius, it stays clear of every
    immovable, and the object's footprint swept along it stays inside the
    shelf walls. Falls back to the original polyline where nothing is
    visible."""
    pts: list[tuple[float, float]] = []
    for p in points:
        if not pts or math.hypot(p[0] - pts[-1][0], p[1] - pts[-1][1]) > 1e-12:
            pts.append(p)
    if len(pts) == 1:
        return ShortcutPath((pts[0],))
    circ = object_shape.circumradius()
    ex, ey = object_shape.world_extents(object_theta)
    x_lo, y_lo = scene.shelf.min[0] + ex, scene.shelf.min[1] + ey
    x_hi, y_hi = scene.shelf.max[0] - ex, scene.shelf.max[1] - ey

    def clear(a: tuple[float, float], b: tuple[float, float]) -> bool:
        for p in (a, b):
            if not (x_lo <= p[0] <= x_hi and y_lo <= p[1] <= y_hi):
                return False
        return all(segment_footprint_distance(a, b, fp) > circ for fp in immovables)

    out = [pts[0]]
    anchor = 0
    while anchor < len(pts) - 1:
        nxt = anchor + 1
        for j in range(len(pts) - 1, anchor, -1):
            if clear(pts[anchor], pts[j]):
                nxt = j
                break
        out.append(pts[nxt])
        anchor = nxt
    return ShortcutPath(tuple(out))


def aim_point(shortcut: ShortcutPath, obj: Footprint) -> tuple[float, float]:
    """Contact point on the object's AABB behind it relative to its first
    motion segment: the ray through the path start pointing opposite the
    first motion exits the box on the trailing face."""
    if len(shortcut.points) < 2:
        raise DegenerateDirectionError("shortcut has fewer than two points")
    (x1x, x1y), (x2x, x2y) = shortcut.points[0], shortcut.points[1]
    dx, dy = x1x - x2x, x1y - x2y
    norm = math.hypot(dx, dy)
    if norm < 1e-12:
        raise DegenerateDirectionError("first two shortcut points coincide")
    d = (dx / norm, dy / norm)
    box = obj.aabb()
    hit = ray_aabb_intersect((x1x, x1y), d, box)
    if hit is None:
        hit = ray_aabb_intersect(box.center, d, box)
    return hit


def sample_around(rng: random.Random, point: tuple[float, float], sigma: float = PUSH_SIGMA) -> tuple[float, float]:
    return (rng.gauss(point[0], sigma), rng.gauss(point[1], sigma))


def plan_approach(
    scene: Scene,
    poses: dict[int, Pose2],
    target: tuple[float, float],
    deadline: float | None = None,
) -> Trajectory | None:
    """Collision-free gripper path from home to the target point, treating
    every object (movable or not) as an obstacle."""
    home = scene.gripper_home
    lat = AnchoredLattice.over_region(
        target, GRID_RES, scene.shelf.min[0], scene.shelf.max[0], home.y - 0.05, scene.shelf.max[1]
    )
    gshape = scene.gripper_shape
    obstacle_fps = [o.footprint(poses[o.id]) for o in scene.objects]
    passable = containment_mask(
        gshape, 0.0, lat.cx, lat.cy, scene.shelf.min[0], scene.shelf.max[0], None, scene.shelf.max[1]
    )
    passable &= ~blocked_mask(gshape, 0.0, lat.cx, lat.cy, obstacle_fps, inflate=SWEEP_INFLATION)
    start = lat.index_of(home.x, home.y)
    goal = lat.index_of(*target)
    try:
        path = weighted_astar(passable, start, goal, weight=2.0, deadline=deadline)
    except DeadlineExceeded:
        return None
    if path is None:
        return None
    pts = [(home.x, home.y)] + [lat.world_of(i, j) for i, j in path.cells]
    return Trajectory.from_points(pts, speed=GRIPPER_SPEED, theta=0.0)


def plan_push(
    object_id: int,
    path: AgentPath,
    scene: Scene,
    poses: dict[int, Pose2],
    grid: GridMask,
    seed: int,
    deadline: float | None = None,
) -> PushPlan | None:
    """Sample up to RETRY_BUDGET perturbed push candidates for the object's
    grid path; return the first with a feasible approach and in-bounds
    waypoints. Deterministic for a fixed seed."""
    pts = [grid.cell_center(*c) for c in path.cells]
    obj = scene.object_by_id(object_id)
    pose = poses[object_id]
    imm_fps = [o.footprint(poses[o.id]) for o in scene.immovables()]
    sc = shortcut_path(pts, imm_fps, obj.shape, pose.theta, scene)
    if len(sc.points) < 2:
        return None
    aim = aim_point(sc, obj.footprint(pose))
    first_dir = (sc.points[1][0] - sc.points[0][0], sc.points[1][1] - sc.points[0][1])

    home = scene.gripper_home
    x_lo, x_hi = scene.shelf.min[0], scene.shelf.max[0]
    y_lo, y_hi = home.y, scene.shelf.max[1]
    rng = random.Random(seed)
    for _ in range(RETRY_BUDGET):
        start_pt = sample_around(rng, aim)
        way_pts = [sample_around(rng, p) for p in sc.points]
        candidates = [start_pt] + way_pts
        ok = all(
            x_lo <= px <= x_hi and y_lo <= py <= y_hi for px, py in candidates
        ) and not any(fp.contains(px, py) for fp in imm_fps for px, py in candidates)
        if not ok:
            continue
        seg = (way_pts[0][0] - start_pt[0], way_pts[0][1] - start_pt[1])
        if seg[0] * first_dir[0] + seg[1] * first_dir[1] <= 0.0:
            continue  # would pull, not push
        approach = plan_approach(scene, poses, start_pt, deadline=deadline)
        if approach is None:
            continue
        push = Trajectory.from_points(candidates, speed=GRIPPER_SPEED, theta=0.0)
        if len(push.waypoints) < 2:
            continue
        return PushPlan(approach, push, object_id)
    return None
