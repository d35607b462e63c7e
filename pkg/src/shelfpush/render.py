"""Deterministic SVG rendering of scenes, swept-region masks, clutter paths,
and plan animations for debugging. Same inputs always produce identical
bytes."""
from __future__ import annotations

import math
from typing import Sequence

from .geometry2d import GridMask, Pose2, ShapeKind
from .mapf import MapfSolution
from .retrieval import Ngr
from .scene import ObjectClass, Scene
from .sim import SimState, Trajectory, Waypoint, simulate_push_trajectory

SCALE = 1000.0  # svg units per meter
PAD = 0.05  # meters of margin around the shelf

COLOR_MOVABLE = "#4a90d9"
COLOR_IMMOVABLE = "#d9534f"
COLOR_OOI = "#e8c51a"
COLOR_NGR = "#b0b0b0"
COLOR_PATH = "#ff69b4"
COLOR_GRIPPER = "#444444"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, scene: Scene):
        self.x0 = scene.shelf.min[0] - PAD
        self.y1 = scene.shelf.max[1] + PAD
        width = (scene.shelf.max[0] - scene.shelf.min[0]) + 2 * PAD
        height = (scene.shelf.max[1] - scene.shelf.min[1]) + 2 * PAD + 0.2
        self.w = width * SCALE
        self.h = height * SCALE
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(self.w)}" '
            f'height="{_fmt(self.h)}" viewBox="0 0 {_fmt(self.w)} {_fmt(self.h)}">',
            f'<rect x="0" y="0" width="{_fmt(self.w)}" height="{_fmt(self.h)}" fill="#ffffff"/>',
        ]

    def px(self, x: float, y: float) -> tuple[float, float]:
        return ((x - self.x0) * SCALE, (self.y1 - y) * SCALE)

    def rect(self, pose: Pose2, hx: float, hy: float, fill: str, opacity: float = 1.0) -> None:
        cx, cy = self.px(pose.x, pose.y)
        deg = -math.degrees(pose.theta)
        self.parts.append(
            f'<rect x="{_fmt(cx - hx * SCALE)}" y="{_fmt(cy - hy * SCALE)}" '
            f'width="{_fmt(2 * hx * SCALE)}" height="{_fmt(2 * hy * SCALE)}" '
            f'fill="{fill}" fill-opacity="{_fmt(opacity)}" '
            f'transform="rotate({_fmt(deg)} {_fmt(cx)} {_fmt(cy)})"/>'
        )

    def circle(self, x: float, y: float, r: float, fill: str, opacity: float = 1.0) -> None:
        cx, cy = self.px(x, y)
        self.parts.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(r * SCALE)}" '
            f'fill="{fill}" fill-opacity="{_fmt(opacity)}"/>'
        )

    def polyline(self, pts: Sequence[tuple[float, float]], stroke: str, width: float = 2.0) -> None:
        coords = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (self.px(x, y) for x, y in pts))
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="{_fmt(width)}"/>'
        )

    def outline(self, x_lo, y_lo, x_hi, y_hi, stroke: str) -> None:
        ax, ay = self.px(x_lo, y_hi)
        bx, by = self.px(x_hi, y_lo)
        self.parts.append(
            f'<rect x="{_fmt(ax)}" y="{_fmt(ay)}" width="{_fmt(bx - ax)}" height="{_fmt(by - ay)}" '
            f'fill="none" stroke="{stroke}" stroke-width="2.00"/>'
        )

    def finish(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _object_color(klass: ObjectClass) -> str:
    if klass is ObjectClass.IMMOVABLE:
        return COLOR_IMMOVABLE
    if klass is ObjectClass.OOI:
        return COLOR_OOI
    return COLOR_MOVABLE


def render_frame(
    scene: Scene,
    state: SimState | None = None,
    ngr: Ngr | None = None,
    paths: MapfSolution | None = None,
    gripper_pose: Pose2 | None = None,
) -> str:
    """One SVG frame: shelf outline, movables blue, immovables red, target
    yellow, swept-region mask gray, clutter paths pink."""
    canvas = _Canvas(scene)
    poses = state.poses if state is not None else scene.initial_poses()

    if ngr is not None:
        mask = ngr.mask
        res = mask.resolution
        # merge vertical runs per column to keep the file small
        for i in range(mask.width):
            j = 0
            while j < mask.height:
                if mask.bits[i, j]:
                    j0 = j
                    while j < mask.height and mask.bits[i, j]:
                        j += 1
                    x0, _ = mask.cell_center(i, 0)
                    y_lo = mask.origin[1] + j0 * res
                    y_hi = mask.origin[1] + j * res
                    canvas.rect(
                        Pose2(x0, 0.5 * (y_lo + y_hi), 0.0), res / 2.0, (y_hi - y_lo) / 2.0,
                        COLOR_NGR, opacity=0.5,
                    )
                else:
                    j += 1

    canvas.outline(
        scene.shelf.min[0], scene.shelf.min[1], scene.shelf.max[0], scene.shelf.max[1], "#000000"
    )

    for obj in scene.objects:
        pose = poses[obj.id]
        color = _object_color(obj.klass)
        if obj.shape.kind is ShapeKind.CIRCLE:
            canvas.circle(pose.x, pose.y, obj.shape.radius, color, opacity=0.9)
        else:
            hx, hy = obj.shape.half_extents
            canvas.rect(pose, hx, hy, color, opacity=0.9)

    if paths is not None and ngr is not None:
        grid = ngr.mask
        for oid in sorted(paths.paths):
            cells = paths.paths[oid].cells
            if len(cells) >= 2:
                canvas.polyline([grid.cell_center(*c) for c in cells], COLOR_PATH, width=3.0)

    gp = gripper_pose if gripper_pose is not None else scene.gripper_home
    canvas.rect(gp, scene.gripper_half_extents[0], scene.gripper_half_extents[1], COLOR_GRIPPER, 0.8)
    return canvas.finish()


def render_plan_frames(
    scene: Scene, trajectories: Sequence[Trajectory], frame_dt: float = 0.5
) -> list[str]:
    """Animate a plan by simulating it: one frame per frame_dt of plan time,
    ceil(total duration / frame_dt) frames total."""
    total = sum(t.duration for t in trajectories)
    n_frames = max(1, int(math.ceil(total / frame_dt - 1e-12)))
    boundaries = [k * frame_dt for k in range(1, n_frames + 1)]
    frames: list[str] = []
    state = SimState(scene.initial_poses(), 0.0)
    elapsed = 0.0
    bi = 0
    for traj in trajectories:
        snapshots: list[tuple[float, Pose2]] = []
        while bi < len(boundaries) and boundaries[bi] <= elapsed + traj.duration + 1e-12:
            snapshots.append((boundaries[bi] - elapsed, None))
            bi += 1
        # simulate piecewise so each snapshot reflects mid-trajectory state
        t_prev = 0.0
        for t_snap, _ in snapshots:
            segment = _clip_trajectory(traj, t_prev, t_snap)
            if segment is not None:
                report = simulate_push_trajectory(scene, state, segment)
                state = report.final
            frames.append(render_frame(scene, state=state, gripper_pose=traj.pose_at(t_snap)))
            t_prev = t_snap
        if t_prev < traj.duration:
            segment = _clip_trajectory(traj, t_prev, traj.duration)
            if segment is not None:
                report = simulate_push_trajectory(scene, state, segment)
                state = report.final
        elapsed += traj.duration
    while len(frames) < n_frames:
        frames.append(render_frame(scene, state=state))
    return frames


def _clip_trajectory(traj: Trajectory, t0: float, t1: float) -> Trajectory | None:
    if t1 - t0 < 1e-9:
        return None
    times = [t0] + [w.t for w in traj.waypoints if t0 < w.t < t1] + [t1]
    wps = tuple(Waypoint(traj.pose_at(t), t - t0) for t in times)
    if len(wps) < 2:
        return None
    return Trajectory(wps, attached_ooi=traj.attached_ooi)
