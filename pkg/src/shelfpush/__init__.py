"""Planar shelf-clutter retrieval: rearrange movable objects with
non-prehensile pushes until a target object can be extracted."""

from .geometry2d import Aabb, Footprint, GridMask, Pose2, Shape, ShapeKind
from .scene import ObjectClass, ObjectSpec, Scene, generate_scene, load_scene, save_scene
from .sim import SimReport, SimState, Trajectory, replay, simulate_push_trajectory
from .solver import Algorithm, Plan, SolverConfig, solve

__all__ = [
    "Aabb",
    "Algorithm",
    "Footprint",
    "GridMask",
    "ObjectClass",
    "ObjectSpec",
    "Plan",
    "Pose2",
    "Scene",
    "Shape",
    "ShapeKind",
    "SimReport",
    "SimState",
    "SolverConfig",
    "Trajectory",
    "generate_scene",
    "load_scene",
    "replay",
    "save_scene",
    "simulate_push_trajectory",
    "solve",
]
