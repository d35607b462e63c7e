"""Deterministic quasi-static push physics.

The gripper is a commanded rigid body moved along timestamped trajectories at
a fixed timestep. Objects it penetrates are projected out along the minimum
translation vector; object-object penetrations are then resolved by iterated
half/half MTV projection. Immovable obstacles and the shelf side/back walls
never move. Objects have no momentum: when the gripper stops, everything
stops.

Interaction constraints reported as violations:
  IMMOVABLE_CONTACT  anything overlaps an immovable obstacle (tangency counts)
  OFF_SHELF          an object's centroid leaves the shelf box
  OVERSPEED          an object's per-step speed exceeds v_max
  NON_CONVERGENCE    MTV projection failed to separate all pairs (fatal)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .geometry2d import Footprint, Pose2, Shape, penetration_xy
from .scene import ObjectClass, Scene

DT = 0.01
GRIPPER_SPEED = 0.1
MAX_PROJECTION_ITERS = 64
PENETRATION_TOL = 1e-9
# Projection adds this slack so resolved pairs end strictly separated; it is
# far below the 1e-6 residual-penetration budget.
SEPARATION_SLACK = 1e-7

TraceFn = Callable[[float, Pose2, tuple[int, ...]], None]


@dataclass(frozen=True)
class Waypoint:
    pose: Pose2
    t: float


@dataclass(frozen=True)
class Trajectory:
    """Timestamped gripper waypoints; t strictly increasing, starting at 0.
    When attached_ooi is set, the target object is slaved rigidly to the
    gripper for the whole trajectory at the relative pose it has when the
    trajectory starts."""

    waypoints: tuple[Waypoint, ...]
    attached_ooi: bool = False

    def __post_init__(self) -> None:
        if not self.waypoints:
            raise ValueError("trajectory needs at least one waypoint")
        times = [w.t for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")

    @property
    def duration(self) -> float:
        return self.waypoints[-1].t

    def pose_at(self, t: float) -> Pose2:
        wps = self.waypoints
        if t <= wps[0].t:
            return wps[0].pose
        if t >= wps[-1].t:
            return wps[-1].pose
        lo, hi = 0, len(wps) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if wps[mid].t <= t:
                lo = mid
            else:
                hi = mid
        a, b = wps[lo], wps[hi]
        f = (t - a.t) / (b.t - a.t)
        return Pose2(
            a.pose.x + f * (b.pose.x - a.pose.x),
            a.pose.y + f * (b.pose.y - a.pose.y),
            a.pose.theta,
        )

    def path_length(self) -> float:
        return sum(
            math.hypot(b.pose.x - a.pose.x, b.pose.y - a.pose.y)
            for a, b in zip(self.waypoints, self.waypoints[1:])
        )

    @staticmethod
    def from_points(
        points: Sequence[tuple[float, float]],
        speed: float = GRIPPER_SPEED,
        theta: float = 0.0,
        attached_ooi: bool = False,
    ) -> "Trajectory":
        """Constant-speed trajectory through the given positions; consecutive
        duplicates are dropped."""
        if not points:
            raise ValueError("no points")
        wps = [Waypoint(Pose2(points[0][0], points[0][1], theta), 0.0)]
        t = 0.0
        for x, y in points[1:]:
            prev = wps[-1].pose
            d = math.hypot(x - prev.x, y - prev.y)
            if d < 1e-12:
                continue
            t += d / speed
            wps.append(Waypoint(Pose2(x, y, theta), t))
        return Trajectory(tuple(wps), attached_ooi=attached_ooi)


@dataclass(frozen=True)
class SimState:
    poses: dict[int, Pose2]
    time: float = 0.0


class ViolationKind(str, Enum):
    IMMOVABLE_CONTACT = "immovable_contact"
    OFF_SHELF = "off_shelf"
    OVERSPEED = "overspeed"
    NON_CONVERGENCE = "non_convergence"


@dataclass(frozen=True)
class Violation:
    time: float
    object_id: int
    kind: ViolationKind


@dataclass(frozen=True)
class SimReport:
    final: SimState
    violations: tuple[Violation, ...]
    max_speed_seen: float

    @property
    def valid(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class ReplayResult:
    final: SimState
    violations: tuple[Violation, ...]
    max_speed_seen: float
    retrieved: bool

    @property
    def success(self) -> bool:
        return not self.violations and self.retrieved


class _Body:
    __slots__ = ("oid", "shape", "theta", "circ")

    def __init__(self, oid: int, shape: Shape, theta: float):
        self.oid = oid
        self.shape = shape
        self.theta = theta
        self.circ = shape.circumradius()


class _SimContext:
    """Per-run scratch: object kinds, fixed headings, wall planes."""

    def __init__(self, scene: Scene, state: SimState, attached_ooi: bool):
        self.scene = scene
        self.v_max = scene.constraints.v_max
        self.attached = attached_ooi
        self.ooi_id = scene.ooi.id
        self.pos: dict[int, tuple[float, float]] = {
            oid: (p.x, p.y) for oid, p in state.poses.items()
        }
        self.theta: dict[int, float] = {oid: p.theta for oid, p in state.poses.items()}
        self.movable: list[_Body] = []
        self.immovable: list[_Body] = []
        for o in sorted(scene.objects, key=lambda o: o.id):
            body = _Body(o.id, o.shape, self.theta[o.id])
            if o.klass is ObjectClass.IMMOVABLE:
                self.immovable.append(body)
            elif o.klass is ObjectClass.OOI and attached_ooi:
                pass  # carried by the gripper, not a free body
            else:
                self.movable.append(body)
        self.shelf = scene.shelf
        self.wall_x_lo, self.wall_y_lo = scene.shelf.min
        self.wall_x_hi, self.wall_y_hi = scene.shelf.max


def _pen_body(a: _Body, ax: float, ay: float, b: _Body, bx: float, by: float):
    dx, dy = ax - bx, ay - by
    reach = a.circ + b.circ
    if dx * dx + dy * dy > reach * reach:
        return None
    return penetration_xy(a.shape, ax, ay, a.theta, b.shape, bx, by, b.theta)


def _step(
    ctx: _SimContext,
    gripper_parts: list[tuple[_Body, float, float]],
    dt: float,
    now: float,
    violations: list[Violation],
    seen: set[tuple[int, ViolationKind]],
) -> tuple[float, bool, tuple[int, ...]]:
    """Resolve one gripper step. Returns (max object speed, fatal, moved ids)."""

    def record(oid: int, kind: ViolationKind) -> None:
        if (oid, kind) not in seen:
            seen.add((oid, kind))
            violations.append(Violation(now, oid, kind))

    pos = ctx.pos
    before = {b.oid: pos[b.oid] for b in ctx.movable}
    dirty: set[int] = set()
    bodies = {b.oid: b for b in ctx.movable}

    # gripper (and carried object) against immovables
    for part, gx, gy in gripper_parts:
        for imm in ctx.immovable:
            ix, iy = pos[imm.oid]
            if _pen_body(part, gx, gy, imm, ix, iy) is not None:
                record(imm.oid, ViolationKind.IMMOVABLE_CONTACT)

    converged = False
    for _ in range(MAX_PROJECTION_ITERS):
        progress = False

        for body in ctx.movable:
            ox, oy = pos[body.oid]
            for part, gx, gy in gripper_parts:
                pen = _pen_body(body, ox, oy, part, gx, gy)
                if pen is not None and pen[0] > PENETRATION_TOL:
                    depth, nx, ny = pen
                    shift = depth + SEPARATION_SLACK
                    ox, oy = ox + nx * shift, oy + ny * shift
                    pos[body.oid] = (ox, oy)
                    dirty.add(body.oid)
                    progress = True

        if dirty:
            for i, a in enumerate(ctx.movable):
                for b in ctx.movable[i + 1 :]:
                    if a.oid not in dirty and b.oid not in dirty:
                        continue
                    ax, ay = pos[a.oid]
                    bx, by = pos[b.oid]
                    pen = _pen_body(a, ax, ay, b, bx, by)
                    if pen is not None and pen[0] > PENETRATION_TOL:
                        depth, nx, ny = pen
                        half = 0.5 * depth + SEPARATION_SLACK
                        pos[a.oid] = (ax + nx * half, ay + ny * half)
                        pos[b.oid] = (bx - nx * half, by - ny * half)
                        dirty.add(a.oid)
                        dirty.add(b.oid)
                        progress = True

            for oid in sorted(dirty):
                body = bodies[oid]
                ox, oy = pos[oid]
                for imm in ctx.immovable:
                    ix, iy = pos[imm.oid]
                    pen = _pen_body(body, ox, oy, imm, ix, iy)
                    if pen is not None:
                        record(imm.oid, ViolationKind.IMMOVABLE_CONTACT)
                        if pen[0] > PENETRATION_TOL:
                            depth, nx, ny = pen
                            shift = depth + SEPARATION_SLACK
                            ox, oy = ox + nx * shift, oy + ny * shift
                            pos[oid] = (ox, oy)
                            progress = True
                # side and back walls are rigid; the front opening is free
                ex, ey = body.shape.world_extents(body.theta)
                nx_, ny_ = ox, oy
                if nx_ - ex < ctx.wall_x_lo:
                    nx_ = ctx.wall_x_lo + ex + SEPARATION_SLACK
                if nx_ + ex > ctx.wall_x_hi:
                    nx_ = ctx.wall_x_hi - ex - SEPARATION_SLACK
                if ny_ + ey > ctx.wall_y_hi:
                    ny_ = ctx.wall_y_hi - ey - SEPARATION_SLACK
                if nx_ != ox or ny_ != oy:
                    pos[oid] = (nx_, ny_)
                    progress = True

        if not progress:
            converged = True
            break

    max_speed = 0.0
    moved: list[int] = []
    for oid in sorted(dirty):
        ox, oy = pos[oid]
        px, py = before[oid]
        disp = math.hypot(ox - px, oy - py)
        if disp > 0.0:
            moved.append(oid)
        speed = disp / dt
        max_speed = max(max_speed, speed)
        if speed > ctx.v_max:
            record(oid, ViolationKind.OVERSPEED)
        if not ctx.shelf.contains_point(ox, oy):
            record(oid, ViolationKind.OFF_SHELF)

    if not converged:
        record(-1, ViolationKind.NON_CONVERGENCE)
        return max_speed, True, tuple(moved)
    return max_speed, False, tuple(moved)


def step_push(
    scene: Scene,
    state: SimState,
    gripper_from: Pose2,
    gripper_to: Pose2,
    dt: float,
    attached_rel: Pose2 | None = None,
) -> tuple[SimState, tuple[Violation, ...], float]:
    """Advance one step: move the gripper from/to and resolve contacts.
    attached_rel, when given, is the carried target object's pose in the
    gripper frame."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    ctx = _SimContext(scene, state, attached_ooi=attached_rel is not None)
    violations: list[Violation] = []
    parts = _gripper_parts(ctx, scene, gripper_to, attached_rel)
    max_speed, _, _ = _step(ctx, parts, dt, state.time + dt, violations, set())
    poses = dict(state.poses)
    for oid, (x, y) in ctx.pos.items():
        poses[oid] = Pose2(x, y, ctx.theta[oid])
    if attached_rel is not None:
        op = gripper_to.compose(attached_rel)
        poses[ctx.ooi_id] = op
    return SimState(poses, state.time + dt), tuple(violations), max_speed


def _gripper_parts(
    ctx: _SimContext, scene: Scene, gpose: Pose2, attached_rel: Pose2 | None
) -> list[tuple[_Body, float, float]]:
    g = _Body(-1, scene.gripper_shape, gpose.theta)
    parts = [(g, gpose.x, gpose.y)]
    if attached_rel is not None:
        op = gpose.compose(attached_rel)
        ob = _Body(ctx.ooi_id, scene.ooi.shape, op.theta)
        parts.append((ob, op.x, op.y))
    return parts


def simulate_push_trajectory(
    scene: Scene,
    state: SimState,
    traj: Trajectory,
    dt: float = DT,
    trace: TraceFn | None = None,
    time_offset: float = 0.0,
) -> SimReport:
    """Integrate the trajectory at fixed dt from the given state. The report
    is valid iff no constraint was violated; final poses cover all objects."""
    ctx = _SimContext(scene, state, attached_ooi=traj.attached_ooi)
    attached_rel: Pose2 | None = None
    if traj.attached_ooi:
        g0 = traj.waypoints[0].pose
        attached_rel = g0.inverse().compose(state.poses[ctx.ooi_id])

    violations: list[Violation] = []
    seen: set[tuple[int, ViolationKind]] = set()
    max_speed = 0.0
    duration = traj.duration
    n_full = int(math.floor(duration / dt + 1e-12))
    times = [k * dt for k in range(1, n_full + 1)]
    if not times or duration - times[-1] > 1e-12:
        times.append(duration)

    prev_t = 0.0
    g_pose = traj.pose_at(0.0)
    fatal = False
    for t in times:
        step_dt = t - prev_t
        if step_dt <= 0.0:
            continue
        g_pose = traj.pose_at(t)
        prev_t = t
        parts = _gripper_parts(ctx, scene, g_pose, attached_rel)
        speed, fatal, moved = _step(
            ctx, parts, step_dt, time_offset + t, violations, seen
        )
        max_speed = max(max_speed, speed)
        if trace is not None:
            trace(time_offset + t, g_pose, moved)
        if fatal:
            break

    poses = dict(state.poses)
    for oid, (x, y) in ctx.pos.items():
        poses[oid] = Pose2(x, y, ctx.theta[oid])
    if attached_rel is not None:
        poses[ctx.ooi_id] = g_pose.compose(attached_rel)
    final = SimState(poses, time_offset + (prev_t if fatal else duration))
    return SimReport(final, tuple(violations), max_speed)


def replay(
    scene: Scene,
    trajectories: Sequence[Trajectory],
    dt: float = DT,
    trace: TraceFn | None = None,
) -> ReplayResult:
    """Chain the trajectory sequence from the pristine initial scene. Success
    means no violations and the target object extracted: the last trajectory
    carries it and ends with gripper and object outside the shelf."""
    state = SimState(scene.initial_poses(), 0.0)
    violations: list[Violation] = []
    max_speed = 0.0
    for traj in trajectories:
        report = simulate_push_trajectory(
            scene, state, traj, dt=dt, trace=trace, time_offset=state.time
        )
        violations.extend(report.violations)
        max_speed = max(max_speed, report.max_speed_seen)
        state = report.final
        if any(v.kind is ViolationKind.NON_CONVERGENCE for v in report.violations):
            break

    retrieved = False
    if trajectories and trajectories[-1].attached_ooi:
        g_final = trajectories[-1].waypoints[-1].pose
        gx_lo = g_final.x - scene.gripper_half_extents[0]
        gx_hi = g_final.x + scene.gripper_half_extents[0]
        gy_lo = g_final.y - scene.gripper_half_extents[1]
        gy_hi = g_final.y + scene.gripper_half_extents[1]
        box = scene.shelf
        gripper_out = gx_hi < box.min[0] or gx_lo > box.max[0] or gy_hi < box.min[1] or gy_lo > box.max[1]
        op = state.poses[scene.ooi.id]
        ooi_out = not box.contains_point(op.x, op.y)
        retrieved = gripper_out and ooi_out
    return ReplayResult(state, tuple(violations), max_speed, retrieved)
