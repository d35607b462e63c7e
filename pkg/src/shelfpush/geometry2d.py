"""Planar geometry kernel: poses, footprints, overlap and penetration tests,
ray/AABB intersection, and rasterization of swept footprints onto grids.

All lengths are meters, angles radians. Footprints are closed regions:
boundary contact counts as overlap. Everything here is a pure function of
immutable inputs, so concurrent use is safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# On-boundary predicates resolve at this scale; inputs are assumed to be
# desk-scale (millimeters to meters), so 1e-9 m is far below feature size.
BOUNDARY_TOL = 1e-9


def wrap_angle(theta: float) -> float:
    """Normalize an angle into [-pi, pi)."""
    t = math.fmod(theta + math.pi, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    return t - math.pi


@dataclass(frozen=True)
class Pose2:
    """SE(2) pose. theta is normalized into [-pi, pi) on construction."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-(c * self.x + s * self.y), -(-s * self.x + c * self.y), -self.theta)

    def translated(self, dx: float, dy: float) -> "Pose2":
        return Pose2(self.x + dx, self.y + dy, self.theta)


class ShapeKind(str, Enum):
    CIRCLE = "circle"
    RECTANGLE = "rectangle"


@dataclass(frozen=True)
class Shape:
    """Pose-free footprint shape: a disc or a centered rectangle."""

    kind: ShapeKind
    radius: float = 0.0
    half_extents: tuple[float, float] = (0.0, 0.0)

    @staticmethod
    def circle(radius: float) -> "Shape":
        if radius <= 0.0:
            raise ValueError(f"circle radius must be > 0, got {radius}")
        return Shape(ShapeKind.CIRCLE, radius=radius)

    @staticmethod
    def rectangle(hx: float, hy: float) -> "Shape":
        if hx <= 0.0 or hy <= 0.0:
            raise ValueError(f"rectangle half-extents must be > 0, got ({hx}, {hy})")
        return Shape(ShapeKind.RECTANGLE, half_extents=(hx, hy))

    def inflated(self, margin: float) -> "Shape":
        if margin == 0.0:
            return self
        if self.kind is ShapeKind.CIRCLE:
            return Shape.circle(self.radius + margin)
        hx, hy = self.half_extents
        return Shape.rectangle(hx + margin, hy + margin)

    def circumradius(self) -> float:
        if self.kind is ShapeKind.CIRCLE:
            return self.radius
        hx, hy = self.half_extents
        return math.hypot(hx, hy)

    def world_extents(self, theta: float) -> tuple[float, float]:
        """Axis-aligned half-extents of the shape rotated by theta."""
        if self.kind is ShapeKind.CIRCLE:
            return (self.radius, self.radius)
        hx, hy = self.half_extents
        c, s = abs(math.cos(theta)), abs(math.sin(theta))
        return (hx * c + hy * s, hx * s + hy * c)


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box, min <= max componentwise."""

    min: tuple[float, float]
    max: tuple[float, float]

    def __post_init__(self) -> None:
        if self.min[0] > self.max[0] or self.min[1] > self.max[1]:
            raise ValueError(f"degenerate aabb {self.min} > {self.max}")

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1]))

    @property
    def size(self) -> tuple[float, float]:
        return (self.max[0] - self.min[0], self.max[1] - self.min[1])

    def contains_point(self, x: float, y: float) -> bool:
        return self.min[0] <= x <= self.max[0] and self.min[1] <= y <= self.max[1]


@dataclass(frozen=True)
class Footprint:
    """A shape placed at a pose. World-frame geometry (corners, AABB) is
    recomputed from the pose on every query; nothing is cached."""

    shape: Shape
    pose: Pose2

    def rect_corners(self) -> list[tuple[float, float]]:
        if self.shape.kind is not ShapeKind.RECTANGLE:
            raise ValueError("corners are only defined for rectangles")
        hx, hy = self.shape.half_extents
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        px, py = self.pose.x, self.pose.y
        return [
            (px + c * dx - s * dy, py + s * dx + c * dy)
            for dx, dy in ((hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy))
        ]

    def aabb(self) -> Aabb:
        ex, ey = self.shape.world_extents(self.pose.theta)
        return Aabb((self.pose.x - ex, self.pose.y - ey), (self.pose.x + ex, self.pose.y + ey))

    def contains(self, x: float, y: float) -> bool:
        """Closed point membership."""
        if self.shape.kind is ShapeKind.CIRCLE:
            return (x - self.pose.x) ** 2 + (y - self.pose.y) ** 2 <= self.shape.radius**2
        hx, hy = self.shape.half_extents
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        dx, dy = x - self.pose.x, y - self.pose.y
        u = c * dx + s * dy
        v = -s * dx + c * dy
        return -hx <= u <= hx and -hy <= v <= hy


# ---------------------------------------------------------------------------
# Penetration / overlap
# ---------------------------------------------------------------------------
# penetration_xy returns (depth, nx, ny) where (nx, ny) is the unit direction
# that separates shape A from shape B when A is translated by depth * n, or
# None when the shapes are strictly disjoint. depth == 0.0 means boundary
# contact, which still counts as overlap.


def _pen_circle_circle(xa, ya, ra, xb, yb, rb):
    dx, dy = xa - xb, ya - yb
    d2 = dx * dx + dy * dy
    rsum = ra + rb
    if d2 > rsum * rsum:
        return None
    d = math.sqrt(d2)
    if d < 1e-12:
        return (rsum, 1.0, 0.0)
    return (rsum - d, dx / d, dy / d)


def _pen_circle_rect(xc, yc, r, xr, yr, hx, hy, cr, sr):
    # circle A vs rectangle B (cr, sr = cos/sin of the rectangle heading)
    dx, dy = xc - xr, yc - yr
    px = cr * dx + sr * dy
    py = -sr * dx + cr * dy
    qx = min(max(px, -hx), hx)
    qy = min(max(py, -hy), hy)
    ex, ey = px - qx, py - qy
    d2 = ex * ex + ey * ey
    if d2 > 1e-24:
        d = math.sqrt(d2)
        if d > r:
            return None
        lx, ly = ex / d, ey / d
        return (r - d, cr * lx - sr * ly, sr * lx + cr * ly)
    # center inside (or on the boundary of) the rectangle: push out of the
    # nearest face
    fx = hx - abs(px)
    fy = hy - abs(py)
    if fx <= fy:
        lx, ly = (1.0 if px >= 0.0 else -1.0), 0.0
        depth = r + fx
    else:
        lx, ly = 0.0, (1.0 if py >= 0.0 else -1.0)
        depth = r + fy
    return (depth, cr * lx - sr * ly, sr * lx + cr * ly)


def _rect_axes(theta: float) -> tuple[tuple[float, float], tuple[float, float]]:
    c, s = math.cos(theta), math.sin(theta)
    return ((c, s), (-s, c))


def _pen_rect_rect(xa, ya, hxa, hya, ta, xb, yb, hxb, hyb, tb):
    axes_a = _rect_axes(ta)
    axes_b = _rect_axes(tb)
    dx, dy = xa - xb, ya - yb
    best = None
    for ux, uy in (*axes_a, *axes_b):
        proj = dx * ux + dy * uy
        ra = hxa * abs(ux * axes_a[0][0] + uy * axes_a[0][1]) + hya * abs(
            ux * axes_a[1][0] + uy * axes_a[1][1]
        )
        rb = hxb * abs(ux * axes_b[0][0] + uy * axes_b[0][1]) + hyb * abs(
            ux * axes_b[1][0] + uy * axes_b[1][1]
        )
        overlap = ra + rb - abs(proj)
        if overlap < 0.0:
            return None
        if best is None or overlap < best[0]:
            sign = 1.0 if proj >= 0.0 else -1.0
            best = (overlap, sign * ux, sign * uy)
    return best


def penetration_xy(
    shape_a: Shape, xa: float, ya: float, ta: float, shape_b: Shape, xb: float, yb: float, tb: float
):
    """Penetration of shape A at (xa, ya, ta) against shape B at (xb, yb, tb)."""
    a_circ = shape_a.kind is ShapeKind.CIRCLE
    b_circ = shape_b.kind is ShapeKind.CIRCLE
    if a_circ and b_circ:
        return _pen_circle_circle(xa, ya, shape_a.radius, xb, yb, shape_b.radius)
    if a_circ:
        hx, hy = shape_b.half_extents
        return _pen_circle_rect(xa, ya, shape_a.radius, xb, yb, hx, hy, math.cos(tb), math.sin(tb))
    if b_circ:
        hx, hy = shape_a.half_extents
        res = _pen_circle_rect(xb, yb, shape_b.radius, xa, ya, hx, hy, math.cos(ta), math.sin(ta))
        if res is None:
            return None
        depth, nx, ny = res
        return (depth, -nx, -ny)
    hxa, hya = shape_a.half_extents
    hxb, hyb = shape_b.half_extents
    return _pen_rect_rect(xa, ya, hxa, hya, ta, xb, yb, hxb, hyb, tb)


def penetration(a: Footprint, b: Footprint):
    return penetration_xy(
        a.shape, a.pose.x, a.pose.y, a.pose.theta, b.shape, b.pose.x, b.pose.y, b.pose.theta
    )


def overlap(a: Footprint, b: Footprint) -> bool:
    """True iff the closed regions intersect (tangency counts)."""
    return penetration(a, b) is not None


# ---------------------------------------------------------------------------
# Ray / AABB
# ---------------------------------------------------------------------------


def ray_aabb_intersect(
    origin: tuple[float, float], direction: tuple[float, float], box: Aabb
) -> tuple[float, float] | None:
    """Nearest point where the ray enters the box; the exit point when the
    origin lies inside; None on a miss. direction must be a unit vector."""
    tmin, tmax = -math.inf, math.inf
    for axis in (0, 1):
        o, d = origin[axis], direction[axis]
        lo, hi = box.min[axis], box.max[axis]
        if abs(d) < 1e-15:
            if o < lo or o > hi:
                return None
        else:
            t1 = (lo - o) / d
            t2 = (hi - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            tmin = max(tmin, t1)
            tmax = min(tmax, t2)
    if tmax < tmin or tmax < 0.0:
        return None
    t = tmin if tmin >= 0.0 else tmax
    return (origin[0] + t * direction[0], origin[1] + t * direction[1])


# ---------------------------------------------------------------------------
# Occupancy grids
# ---------------------------------------------------------------------------


@dataclass
class GridMask:
    """Boolean occupancy raster. Cell (i, j) covers the half-open square
    [origin + (i, j) * res, origin + (i + 1, j + 1) * res)."""

    origin: tuple[float, float]
    resolution: float
    width: int
    height: int
    bits: np.ndarray

    @staticmethod
    def create(origin: tuple[float, float], resolution: float, width: int, height: int) -> "GridMask":
        if resolution <= 0.0:
            raise ValueError("resolution must be > 0")
        return GridMask(origin, resolution, width, height, np.zeros((width, height), dtype=bool))

    @staticmethod
    def over_box(box: Aabb, resolution: float) -> "GridMask":
        w = max(1, int(round((box.max[0] - box.min[0]) / resolution)))
        h = max(1, int(round((box.max[1] - box.min[1]) / resolution)))
        return GridMask.create((box.min[0], box.min[1]), resolution, w, h)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(math.floor((x - self.origin[0]) / self.resolution)),
            int(math.floor((y - self.origin[1]) / self.resolution)),
        )

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (
            self.origin[0] + (i + 0.5) * self.resolution,
            self.origin[1] + (j + 0.5) * self.resolution,
        )

    def in_bounds(self, i: int, j: int) -> bool:
        return 0 <= i < self.width and 0 <= j < self.height

    def count(self) -> int:
        return int(self.bits.sum())

    def copy(self) -> "GridMask":
        return GridMask(self.origin, self.resolution, self.width, self.height, self.bits.copy())

    def union_inplace(self, other: "GridMask") -> None:
        if (self.origin, self.resolution, self.width, self.height) != (
            other.origin,
            other.resolution,
            other.width,
            other.height,
        ):
            raise ValueError("grid layouts differ")
        self.bits |= other.bits

    def iter_set_cells(self) -> Iterator[tuple[int, int]]:
        for i, j in zip(*np.nonzero(self.bits)):
            yield (int(i), int(j))

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys, indexing="ij")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridMask):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.resolution == other.resolution
            and self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.bits, other.bits))
        )


def _mark_pose(grid: GridMask, shape: Shape, x: float, y: float, theta: float) -> None:
    ex, ey = shape.world_extents(theta)
    res = grid.resolution
    i0 = max(0, int(math.floor((x - ex - grid.origin[0]) / res - 0.5)))
    i1 = min(grid.width - 1, int(math.ceil((x + ex - grid.origin[0]) / res)))
    j0 = max(0, int(math.floor((y - ey - grid.origin[1]) / res - 0.5)))
    j1 = min(grid.height - 1, int(math.ceil((y + ey - grid.origin[1]) / res)))
    if i0 > i1 or j0 > j1:
        return
    cx = grid.origin[0] + (np.arange(i0, i1 + 1) + 0.5) * res
    cy = grid.origin[1] + (np.arange(j0, j1 + 1) + 0.5) * res
    gx, gy = np.meshgrid(cx, cy, indexing="ij")
    dx, dy = gx - x, gy - y
    if shape.kind is ShapeKind.CIRCLE:
        inside = dx * dx + dy * dy <= shape.radius**2
    else:
        hx, hy = shape.half_extents
        c, s = math.cos(theta), math.sin(theta)
        u = c * dx + s * dy
        v = -s * dx + c * dy
        inside = (np.abs(u) <= hx) & (np.abs(v) <= hy)
    grid.bits[i0 : i1 + 1, j0 : j1 + 1] |= inside


def interpolate_poses(poses: Sequence[Pose2], step: float) -> list[Pose2]:
    """Densify a pose polyline so consecutive samples are at most `step` apart
    (positions lerped, headings lerped along the shortest arc)."""
    if not poses:
        return []
    out = [poses[0]]
    for a, b in zip(poses, poses[1:]):
        dist = math.hypot(b.x - a.x, b.y - a.y)
        n = max(1, int(math.ceil(dist / step)))
        dth = wrap_angle(b.theta - a.theta)
        for k in range(1, n + 1):
            f = k / n
            out.append(Pose2(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), a.theta + f * dth))
    return out


def rasterize_sweep(poses: Sequence[Pose2], shape: Shape, grid: GridMask) -> GridMask:
    """Set every cell whose center lies inside the footprint at any
    interpolated pose of the sweep. Interpolation step is resolution/2 so no
    cell center can be skipped between waypoints. Poses outside the grid are
    silently clipped to it."""
    if not poses:
        raise ValueError("empty pose sequence")
    out = grid.copy()
    for p in interpolate_poses(poses, grid.resolution / 2.0):
        _mark_pose(out, shape, p.x, p.y, p.theta)
    return out


# ---------------------------------------------------------------------------
# Vectorized placement tests (used by the planning lattices)
# ---------------------------------------------------------------------------


def overlap_grid(
    shape: Shape,
    theta: float,
    cx: np.ndarray,
    cy: np.ndarray,
    obstacle: Footprint,
    inflate: float = 0.0,
) -> np.ndarray:
    """Boolean array: does `shape` (heading theta, grown by `inflate`) placed
    at each center (cx, cy) overlap the obstacle footprint? Closed test."""
    s = shape.inflated(inflate)
    ob = obstacle.shape
    ox, oy, ot = obstacle.pose.x, obstacle.pose.y, obstacle.pose.theta
    if s.kind is ShapeKind.CIRCLE and ob.kind is ShapeKind.CIRCLE:
        r = s.radius + ob.radius
        return (cx - ox) ** 2 + (cy - oy) ** 2 <= r * r
    if s.kind is ShapeKind.CIRCLE:
        hx, hy = ob.half_extents
        c, sn = math.cos(ot), math.sin(ot)
        dx, dy = cx - ox, cy - oy
        px = c * dx + sn * dy
        py = -sn * dx + c * dy
        ex = px - np.clip(px, -hx, hx)
        ey = py - np.clip(py, -hy, hy)
        return ex * ex + ey * ey <= s.radius**2
    if ob.kind is ShapeKind.CIRCLE:
        hx, hy = s.half_extents
        c, sn = math.cos(theta), math.sin(theta)
        dx, dy = ox - cx, oy - cy
        px = c * dx + sn * dy
        py = -sn * dx + c * dy
        ex = px - np.clip(px, -hx, hx)
        ey = py - np.clip(py, -hy, hy)
        return ex * ex + ey * ey <= ob.radius**2
    hxa, hya = s.half_extents
    hxb, hyb = ob.half_extents
    axes_a = _rect_axes(theta)
    axes_b = _rect_axes(ot)
    dx, dy = cx - ox, cy - oy
    hit = np.ones(np.shape(dx), dtype=bool)
    for ux, uy in (*axes_a, *axes_b):
        ra = hxa * abs(ux * axes_a[0][0] + uy * axes_a[0][1]) + hya * abs(
            ux * axes_a[1][0] + uy * axes_a[1][1]
        )
        rb = hxb * abs(ux * axes_b[0][0] + uy * axes_b[0][1]) + hyb * abs(
            ux * axes_b[1][0] + uy * axes_b[1][1]
        )
        hit &= np.abs(dx * ux + dy * uy) <= ra + rb
    return hit


def footprint_overlaps_mask(fp: Footprint, grid: GridMask) -> bool:
    """True iff the footprint overlaps the square of any set cell."""
    box = fp.aabb()
    res = grid.resolution
    i0 = max(0, int(math.floor((box.min[0] - grid.origin[0]) / res)) - 1)
    i1 = min(grid.width - 1, int(math.floor((box.max[0] - grid.origin[0]) / res)) + 1)
    j0 = max(0, int(math.floor((box.min[1] - grid.origin[1]) / res)) - 1)
    j1 = min(grid.height - 1, int(math.floor((box.max[1] - grid.origin[1]) / res)) + 1)
    if i0 > i1 or j0 > j1:
        return False
    sub = grid.bits[i0 : i1 + 1, j0 : j1 + 1]
    if not sub.any():
        return False
    ii, jj = np.nonzero(sub)
    ccx = grid.origin[0] + (ii + i0 + 0.5) * res
    ccy = grid.origin[1] + (jj + j0 + 0.5) * res
    cell = Shape.rectangle(res / 2.0, res / 2.0)
    return bool(overlap_grid(cell, 0.0, ccx, ccy, fp).any())
