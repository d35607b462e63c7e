"""Scene data model, interaction-constraint parameters, random scene
generation for the three difficulty levels, and the YAML scene file format.

Conventions: the shelf interior is an axis-aligned box; its opening is the
y-min ("front") edge through which the gripper enters. The gripper home pose
sits in front of the opening, centered on it.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum

import yaml

from .geometry2d import Aabb, Footprint, Pose2, Shape, ShapeKind, overlap

FORMAT_VERSION = 1

SHELF_WIDTH = 0.60
SHELF_DEPTH = 0.40
GRIPPER_HALF_EXTENTS = (0.03, 0.015)
GRIPPER_HOME_STANDOFF = 0.15

# kept small enough that 15 movables still pack at ~30% shelf fill
CIRCLE_RADIUS_RANGE = (0.02, 0.04)
RECT_HALF_EXTENT_RANGE = (0.02, 0.045)
MASS_RANGE = (0.1, 1.0)
MU_RANGE = (0.1, 0.9)
WALL_CLEARANCE = 0.01
OBJECT_CLEARANCE = 0.008

MOVABLES_PER_LEVEL = {1: 5, 2: 10, 3: 15}
NUM_IMMOVABLES = 4

# Immovables are kept out of a strip between the shelf opening and the
# target's front face so that a clutter-free retrieval corridor exists;
# movable clutter may still fill it. Half-width covers the gripper and the
# widest carried target.
APPROACH_KEEPOUT_HALF_WIDTH = 0.055

MAX_PLACEMENT_SAMPLES = 10_000


class GenerationFailed(Exception):
    """Raised when rejection sampling cannot place all objects."""


class ParseError(Exception):
    """Malformed scene/plan document."""


class ValidationError(Exception):
    """Document parsed but violates scene invariants."""


class ObjectClass(str, Enum):
    MOVABLE = "movable"
    IMMOVABLE = "immovable"
    OOI = "ooi"


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    shape: Shape
    pose: Pose2
    mass: float
    mu: float
    klass: ObjectClass

    def __post_init__(self) -> None:
        if self.mass <= 0.0:
            raise ValidationError(f"object {self.id}: mass must be > 0")
        if not (0.05 <= self.mu <= 1.0):
            raise ValidationError(f"object {self.id}: mu must be in [0.05, 1.0]")

    def footprint(self, pose: Pose2 | None = None) -> Footprint:
        return Footprint(self.shape, pose if pose is not None else self.pose)


@dataclass(frozen=True)
class ConstraintParams:
    v_max: float = 1.0
    shelf_containment: bool = True
    immovable_contact_forbidden: bool = True

    def __post_init__(self) -> None:
        if self.v_max <= 0.0:
            raise ValidationError("v_max must be > 0")


@dataclass(frozen=True)
class Scene:
    shelf: Aabb
    objects: tuple[ObjectSpec, ...]
    gripper_home: Pose2
    gripper_half_extents: tuple[float, float]
    constraints: ConstraintParams = ConstraintParams()
    opening_edge: str = "ymin"

    @property
    def gripper_shape(self) -> Shape:
        return Shape.rectangle(*self.gripper_half_extents)

    def gripper_footprint(self, pose: Pose2) -> Footprint:
        return Footprint(self.gripper_shape, pose)

    @property
    def ooi(self) -> ObjectSpec:
        return next(o for o in self.objects if o.klass is ObjectClass.OOI)

    def movables(self) -> list[ObjectSpec]:
        return [o for o in self.objects if o.klass is ObjectClass.MOVABLE]

    def immovables(self) -> list[ObjectSpec]:
        return [o for o in self.objects if o.klass is ObjectClass.IMMOVABLE]

    def object_by_id(self, oid: int) -> ObjectSpec:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def initial_poses(self) -> dict[int, Pose2]:
        return {o.id: o.pose for o in self.objects}


def scene_name(level: int, seed: int) -> str:
    return f"level-{level}-seed-{seed}"


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _sample_shape(rng: random.Random, circle_only: bool = False) -> Shape:
    if circle_only or rng.random() < 0.5:
        return Shape.circle(rng.uniform(*CIRCLE_RADIUS_RANGE))
    return Shape.rectangle(
        rng.uniform(*RECT_HALF_EXTENT_RANGE), rng.uniform(*RECT_HALF_EXTENT_RANGE)
    )


def _fits(shelf: Aabb, fp: Footprint, placed: list[Footprint]) -> bool:
    ex, ey = fp.shape.world_extents(fp.pose.theta)
    if not (
        shelf.min[0] + WALL_CLEARANCE <= fp.pose.x - ex
        and fp.pose.x + ex <= shelf.max[0] - WALL_CLEARANCE
        and shelf.min[1] + WALL_CLEARANCE <= fp.pose.y - ey
        and fp.pose.y + ey <= shelf.max[1] - WALL_CLEARANCE
    ):
        return False
    grown = Footprint(fp.shape.inflated(OBJECT_CLEARANCE), fp.pose)
    return not any(overlap(grown, other) for other in placed)


def generate_scene(level: int, seed: int) -> Scene:
    """Deterministically generate a scene for the given difficulty level:
    5/10/15 movables by level, 4 immovables, 1 target object placed in the
    rear half of the shelf."""
    if level not in MOVABLES_PER_LEVEL:
        raise ValueError(f"level must be 1, 2, or 3, got {level}")
    rng = random.Random(scene_name(level, seed))
    shelf = Aabb((0.0, 0.0), (SHELF_WIDTH, SHELF_DEPTH))
    budget = MAX_PLACEMENT_SAMPLES

    def place(shape: Shape, theta: float, y_lo: float, placed: list[Footprint]) -> Pose2:
        nonlocal budget
        ex, ey = shape.world_extents(theta)
        while budget > 0:
            budget -= 1
            x = rng.uniform(shelf.min[0] + WALL_CLEARANCE + ex, shelf.max[0] - WALL_CLEARANCE - ex)
            y = rng.uniform(max(y_lo, shelf.min[1] + WALL_CLEARANCE + ey), shelf.max[1] - WALL_CLEARANCE - ey)
            pose = Pose2(x, y, theta)
            if _fits(shelf, Footprint(shape, pose), placed):
                return pose
        raise GenerationFailed(
            f"could not place all objects for {scene_name(level, seed)} "
            f"within {MAX_PLACEMENT_SAMPLES} samples"
        )

    objects: list[ObjectSpec] = []
    placed: list[Footprint] = []

    def add(oid: int, klass: ObjectClass, shape: Shape, y_lo: float = -math.inf,
            avoid: list[Footprint] | None = None) -> None:
        theta = 0.0 if shape.kind is ShapeKind.CIRCLE else rng.uniform(-math.pi, math.pi)
        blockers = placed if avoid is None else placed + avoid
        pose = place(shape, theta, y_lo, blockers)
        objects.append(
            ObjectSpec(oid, shape, pose, rng.uniform(*MASS_RANGE), rng.uniform(*MU_RANGE), klass)
        )
        placed.append(objects[-1].footprint())

    # Target first, in the rear half, cylinder-like so retrieval widths stay
    # reasonable; then the immovables, then the clutter placed largest-first
    # (largest-first keeps rejection sampling viable at level-3 densities).
    add(0, ObjectClass.OOI, _sample_shape(rng, circle_only=True), y_lo=shelf.max[1] / 2.0)
    ooi_fp = placed[0]
    strip_top = ooi_fp.aabb().min[1]
    keepout = Footprint(
        Shape.rectangle(APPROACH_KEEPOUT_HALF_WIDTH, max(strip_top - shelf.min[1], 0.01) / 2.0),
        Pose2(ooi_fp.pose.x, (shelf.min[1] + strip_top) / 2.0, 0.0),
    )
    imm_shapes = [_sample_shape(rng) for _ in range(NUM_IMMOVABLES)]
    mov_shapes = [_sample_shape(rng) for _ in range(MOVABLES_PER_LEVEL[level])]
    imm_shapes.sort(key=lambda s: -s.circumradius())
    mov_shapes.sort(key=lambda s: -s.circumradius())
    for k, shape in enumerate(imm_shapes):
        add(1 + k, ObjectClass.IMMOVABLE, shape, avoid=[keepout])
    for k, shape in enumerate(mov_shapes):
        add(1 + NUM_IMMOVABLES + k, ObjectClass.MOVABLE, shape)

    home = Pose2(0.5 * (shelf.min[0] + shelf.max[0]), shelf.min[1] - GRIPPER_HOME_STANDOFF, 0.0)
    return Scene(
        shelf=shelf,
        objects=tuple(objects),
        gripper_home=home,
        gripper_half_extents=GRIPPER_HALF_EXTENTS,
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_scene(scene: Scene) -> list[str]:
    """Return a list of invariant violations (empty means the scene is ok)."""
    problems: list[str] = []
    ids = [o.id for o in scene.objects]
    if len(set(ids)) != len(ids):
        problems.append("id collision: object ids are not unique")
    oois = [o for o in scene.objects if o.klass is ObjectClass.OOI]
    if len(oois) != 1:
        problems.append(f"scene must contain exactly one target object, found {len(oois)}")
    for o in scene.objects:
        ex, ey = o.shape.world_extents(o.pose.theta)
        if not (
            scene.shelf.min[0] <= o.pose.x - ex
            and o.pose.x + ex <= scene.shelf.max[0]
            and scene.shelf.min[1] <= o.pose.y - ey
            and o.pose.y + ey <= scene.shelf.max[1]
        ):
            problems.append(f"object {o.id} not contained in the shelf")
    for i, a in enumerate(scene.objects):
        for b in scene.objects[i + 1 :]:
            if overlap(a.footprint(), b.footprint()):
                problems.append(f"objects {a.id} and {b.id} overlap at the initial state")
    if scene.shelf.contains_point(scene.gripper_home.x, scene.gripper_home.y):
        problems.append("gripper home must lie outside the shelf")
    if oois:
        depth = oois[0].pose.y - scene.shelf.min[1]
        if depth > scene.shelf.max[1] - scene.shelf.min[1]:
            problems.append("target object deeper than the shelf")
    return problems


# ---------------------------------------------------------------------------
# Serialization (YAML, format_version 1)
# ---------------------------------------------------------------------------


def _shape_to_doc(shape: Shape) -> dict:
    if shape.kind is ShapeKind.CIRCLE:
        return {"kind": "circle", "radius": shape.radius}
    return {"kind": "rectangle", "half_extents": list(shape.half_extents)}


def _pose_to_doc(pose: Pose2) -> dict:
    return {"x": pose.x, "y": pose.y, "theta": pose.theta}


def save_scene(scene: Scene) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "shelf": {"min": list(scene.shelf.min), "max": list(scene.shelf.max)},
        "opening_edge": scene.opening_edge,
        "gripper_home": _pose_to_doc(scene.gripper_home),
        "gripper_half_extents": list(scene.gripper_half_extents),
        "constraints": {
            "v_max": scene.constraints.v_max,
            "shelf_containment": scene.constraints.shelf_containment,
            "immovable_contact_forbidden": scene.constraints.immovable_contact_forbidden,
        },
        "objects": [
            {
                "id": o.id,
                "klass": o.klass.value,
                "shape": _shape_to_doc(o.shape),
                "pose": _pose_to_doc(o.pose),
                "mass": o.mass,
                "mu": o.mu,
            }
            for o in scene.objects
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False)


def _parse_shape(doc: dict, where: str) -> Shape:
    kind = doc.get("kind")
    if kind == "circle":
        return Shape.circle(float(doc["radius"]))
    if kind == "rectangle":
        hx, hy = doc["half_extents"]
        return Shape.rectangle(float(hx), float(hy))
    raise ParseError(f"{where}: unknown shape kind {kind!r}")


def _parse_pose(doc: dict, where: str) -> Pose2:
    try:
        return Pose2(float(doc["x"]), float(doc["y"]), float(doc["theta"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{where}: bad pose: {exc}") from exc


def load_scene(text: str) -> Scene:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("scene document must be a mapping")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        shelf = Aabb(tuple(map(float, doc["shelf"]["min"])), tuple(map(float, doc["shelf"]["max"])))
        objects = []
        for idx, od in enumerate(doc["objects"]):
            objects.append(
                ObjectSpec(
                    id=int(od["id"]),
                    shape=_parse_shape(od["shape"], f"objects[{idx}].shape"),
                    pose=_parse_pose(od["pose"], f"objects[{idx}].pose"),
                    mass=float(od["mass"]),
                    mu=float(od["mu"]),
                    klass=ObjectClass(od["klass"]),
                )
            )
        cons = doc.get("constraints", {})
        scene = Scene(
            shelf=shelf,
            objects=tuple(objects),
            gripper_home=_parse_pose(doc["gripper_home"], "gripper_home"),
            gripper_half_extents=tuple(map(float, doc["gripper_half_extents"])),
            constraints=ConstraintParams(
                v_max=float(cons.get("v_max", 1.0)),
                shelf_containment=bool(cons.get("shelf_containment", True)),
                immovable_contact_forbidden=bool(cons.get("immovable_contact_forbidden", True)),
            ),
            opening_edge=str(doc.get("opening_edge", "ymin")),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed scene document: {exc!r}") from exc
    problems = validate_scene(scene)
    if problems:
        raise ValidationError("; ".join(problems))
    return scene
