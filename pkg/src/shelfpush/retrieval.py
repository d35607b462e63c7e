"""Contact-free retrieval planning and the negative goal region.

The gripper translates on a 1 cm, 8-connected lattice at fixed heading,
entering through the shelf opening to a grasp pose just in front of the
target object, then retreats along the reverse path carrying it (grasping is
rigid attachment at the approach pose; there is no contact before
attachment). The negative goal region is the raster of everything the
gripper (and the carried object on the way out) sweeps, grown by a safety
margin: clutter placed fully outside it can never obstruct the retrieval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry2d import Aabb, Footprint, GridMask, Pose2, Shape, rasterize_sweep
from .lattice import AnchoredLattice, blocked_mask, containment_mask, weighted_astar
from .scene import Scene
from .sim import GRIPPER_SPEED, Trajectory

GRID_RES = 0.01
# Lattice collision checks inflate footprints by half a cell so the straight
# segments between adjacent nodes are covered, not just the nodes.
SWEEP_INFLATION = GRID_RES / 2.0
# The swept-region raster must over-approximate the lattice collision model:
# clutter fully outside the raster may not block any lattice node of the
# retrieval corridor. That needs sweep inflation plus the worst-case
# cell-corner gap (res * sqrt(2)/2), hence 13 mm at 1 cm resolution.
NGR_INFLATION = 0.013
DEFAULT_GRASP_OFFSET = 0.01
ASTAR_WEIGHT = 2.0


@dataclass(frozen=True)
class RetrievalQuery:
    scene: Scene
    obstacles: frozenset[int]
    grasp_offset: float = DEFAULT_GRASP_OFFSET
    poses: dict[int, Pose2] | None = None  # current poses; None = initial

    def __post_init__(self) -> None:
        ids = {o.id for o in self.scene.objects}
        if not self.obstacles <= ids:
            raise ValueError("obstacle ids not in scene")
        if self.scene.ooi.id in self.obstacles:
            raise ValueError("the target object cannot be its own obstacle")


@dataclass(frozen=True)
class Retrieval:
    """Entry trajectory (home to grasp, contact-free) and exit trajectory
    (grasp to home with the target attached)."""

    enter: Trajectory
    exit: Trajectory
    grasp_pose: Pose2
    ooi_pose: Pose2
    lattice_cost: float  # meters, entry path on the lattice


@dataclass(frozen=True)
class Ngr:
    mask: GridMask

    def count(self) -> int:
        return self.mask.count()


def _current_poses(q: RetrievalQuery) -> dict[int, Pose2]:
    if q.poses is None:
        return q.scene.initial_poses()
    return q.poses


def grasp_candidates(scene: Scene, ooi_pose: Pose2, grasp_offset: float) -> list[Pose2]:
    """Approach poses along the target's AABB front face: gripper leading
    face stopping grasp_offset short of it, laterally centered first and then
    sliding sideways in 1 cm steps while the gripper still spans the face."""
    ooi_fp = Footprint(scene.ooi.shape, ooi_pose)
    box = ooi_fp.aabb()
    g_hx, g_hy = scene.gripper_half_extents
    gy = box.min[1] - grasp_offset - g_hy
    cx = box.center[0]
    half_span = 0.5 * (box.max[0] - box.min[0])
    out: list[Pose2] = []
    k = 0
    while True:
        offsets = (0.0,) if k == 0 else (k * GRID_RES, -k * GRID_RES)
        if k * GRID_RES > half_span:
            break
        for off in offsets:
            gx = min(max(cx + off, scene.shelf.min[0] + g_hx), scene.shelf.max[0] - g_hx)
            pose = Pose2(gx, gy, 0.0)
            if all(abs(pose.x - p.x) > 1e-9 for p in out):
                out.append(pose)
        k += 1
    return out


def grasp_pose_for(scene: Scene, ooi_pose: Pose2, grasp_offset: float) -> Pose2:
    return grasp_candidates(scene, ooi_pose, grasp_offset)[0]


def plan_retrieval(q: RetrievalQuery, weight: float = ASTAR_WEIGHT, deadline: float | None = None) -> Retrieval | None:
    """Minimum-cost (within the given weight bound) lattice trajectory from
    gripper home to the grasp pose and back out with the target attached.
    Entry poses are kept clear of the obstacle set and the target object;
    the whole corridor is additionally checked for the gripper+target
    compound so the reverse (attached) pass is collision-free too. Returns
    None when the lattice is disconnected."""
    scene = q.scene
    poses = _current_poses(q)
    ooi = scene.ooi
    ooi_pose = poses[ooi.id]
    home = scene.gripper_home
    gshape = scene.gripper_shape
    obstacle_fps = [scene.object_by_id(oid).footprint(poses[oid]) for oid in sorted(q.obstacles)]
    ooi_fp = Footprint(ooi.shape, ooi_pose)

    for grasp in grasp_candidates(scene, ooi_pose, q.grasp_offset):
        lat = AnchoredLattice.over_region(
            (grasp.x, grasp.y),
            GRID_RES,
            scene.shelf.min[0],
            scene.shelf.max[0],
            home.y - 0.05,
            scene.shelf.max[1],
        )
        passable = containment_mask(
            gshape, 0.0, lat.cx, lat.cy,
            scene.shelf.min[0], scene.shelf.max[0], None, scene.shelf.max[1],
        )
        passable &= ~blocked_mask(
            gshape, 0.0, lat.cx, lat.cy, obstacle_fps + [ooi_fp], inflate=SWEEP_INFLATION
        )
        # carried-object check: the compound must also clear the corridor on
        # the way out, at the relative offset fixed by the grasp
        rel = (ooi_pose.x - grasp.x, ooi_pose.y - grasp.y)
        passable &= containment_mask(
            ooi.shape, ooi_pose.theta, lat.cx + rel[0], lat.cy + rel[1],
            scene.shelf.min[0], scene.shelf.max[0], None, scene.shelf.max[1],
        )
        passable &= ~blocked_mask(
            ooi.shape, ooi_pose.theta, lat.cx + rel[0], lat.cy + rel[1],
            obstacle_fps, inflate=SWEEP_INFLATION,
        )

        start = lat.index_of(home.x, home.y)
        goal = lat.index_of(grasp.x, grasp.y)
        if not (passable[goal] and passable[start]):
            continue
        path = weighted_astar(passable, start, goal, weight=weight, deadline=deadline)
        if path is None:
            continue
        points = [(home.x, home.y)] + [lat.world_of(i, j) for i, j in path.cells]
        enter = Trajectory.from_points(points, speed=GRIPPER_SPEED, theta=0.0, attached_ooi=False)
        exit_ = Trajectory.from_points(points[::-1], speed=GRIPPER_SPEED, theta=0.0, attached_ooi=True)
        return Retrieval(enter, exit_, grasp, ooi_pose, lattice_cost=path.cost * GRID_RES)
    return None


def compute_ngr(scene: Scene, retrieval: Retrieval, inflation: float = NGR_INFLATION) -> Ngr:
    """Raster of the gripper sweep over the whole trajectory, plus the
    carried object's sweep over the attached segment, with footprints grown
    by the safety margin before rasterization."""
    grid = GridMask.over_box(scene.shelf, GRID_RES)
    gshape = scene.gripper_shape.inflated(inflation)
    enter_poses = [w.pose for w in retrieval.enter.waypoints]
    exit_poses = [w.pose for w in retrieval.exit.waypoints]
    mask = rasterize_sweep(enter_poses, gshape, grid)
    mask = rasterize_sweep(exit_poses, gshape, mask)
    rel = (retrieval.ooi_pose.x - retrieval.grasp_pose.x, retrieval.ooi_pose.y - retrieval.grasp_pose.y)
    carried = [Pose2(p.x + rel[0], p.y + rel[1], retrieval.ooi_pose.theta) for p in exit_poses]
    mask = rasterize_sweep(carried, scene.ooi.shape.inflated(inflation), mask)
    return Ngr(mask)
