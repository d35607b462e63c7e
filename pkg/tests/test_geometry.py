import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shelfpush.geometry2d import (
    Aabb,
    Footprint,
    GridMask,
    Pose2,
    Shape,
    ShapeKind,
    footprint_overlaps_mask,
    interpolate_poses,
    overlap,
    overlap_grid,
    penetration,
    ray_aabb_intersect,
    rasterize_sweep,
    wrap_angle,
)

# ---------------------------------------------------------------------------
# independent oracle: boundary sampling
#
# overlap(A, B) holds iff B's boundary meets A, or one shape contains the
# other's center. Sampling N points along each boundary misses only slivers
# whose penetration depth is about (perimeter/N)^2 / (8 * radius), far below
# 1e-6 m at N = 10^4 for desk-scale shapes.
# ---------------------------------------------------------------------------

N_BOUNDARY = 10_000


def point_in(fp: Footprint, x: float, y: float) -> bool:
    if fp.shape.kind is ShapeKind.CIRCLE:
        return (x - fp.pose.x) ** 2 + (y - fp.pose.y) ** 2 <= fp.shape.radius**2
    c, s = math.cos(fp.pose.theta), math.sin(fp.pose.theta)
    dx, dy = x - fp.pose.x, y - fp.pose.y
    u, v = c * dx + s * dy, -s * dx + c * dy
    hx, hy = fp.shape.half_extents
    return abs(u) <= hx and abs(v) <= hy


def boundary_points(fp: Footprint, n: int) -> np.ndarray:
    if fp.shape.kind is ShapeKind.CIRCLE:
        t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        return np.stack(
            [fp.pose.x + fp.shape.radius * np.cos(t), fp.pose.y + fp.shape.radius * np.sin(t)],
            axis=1,
        )
    hx, hy = fp.shape.half_extents
    per_side = n // 4
    t = np.linspace(-1.0, 1.0, per_side, endpoint=False)
    pts = np.concatenate(
        [
            np.stack([t * hx, np.full(per_side, hy)], axis=1),
            np.stack([np.full(per_side, hx), -t * hy], axis=1),
            np.stack([-t * hx, np.full(per_side, -hy)], axis=1),
            np.stack([np.full(per_side, -hx), t * hy], axis=1),
        ]
    )
    c, s = math.cos(fp.pose.theta), math.sin(fp.pose.theta)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T + np.array([fp.pose.x, fp.pose.y])


def overlap_oracle(a: Footprint, b: Footprint) -> bool:
    for pt in boundary_points(a, N_BOUNDARY):
        if point_in(b, pt[0], pt[1]):
            return True
    for pt in boundary_points(b, N_BOUNDARY):
        if point_in(a, pt[0], pt[1]):
            return True
    return point_in(b, a.pose.x, a.pose.y) or point_in(a, b.pose.x, b.pose.y)


def overlap_oracle_fast(a: Footprint, b: Footprint) -> bool:
    # vectorized version for bulk comparisons
    for src, dst in ((a, b), (b, a)):
        pts = boundary_points(src, N_BOUNDARY)
        if dst.shape.kind is ShapeKind.CIRCLE:
            hit = ((pts[:, 0] - dst.pose.x) ** 2 + (pts[:, 1] - dst.pose.y) ** 2) <= dst.shape.radius**2
        else:
            c, s = math.cos(dst.pose.theta), math.sin(dst.pose.theta)
            dx, dy = pts[:, 0] - dst.pose.x, pts[:, 1] - dst.pose.y
            u, v = c * dx + s * dy, -s * dx + c * dy
            hx, hy = dst.shape.half_extents
            hit = (np.abs(u) <= hx) & (np.abs(v) <= hy)
        if hit.any():
            return True
    return point_in(b, a.pose.x, a.pose.y) or point_in(a, b.pose.x, b.pose.y)


def random_footprint(rng: random.Random) -> Footprint:
    pose = Pose2(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-math.pi, math.pi))
    if rng.random() < 0.5:
        return Footprint(Shape.circle(rng.uniform(0.01, 0.08)), pose)
    return Footprint(Shape.rectangle(rng.uniform(0.01, 0.08), rng.uniform(0.01, 0.08)), pose)


class TestWrapAngle:
    def test_range(self):
        for t in (-10.0, -math.pi, 0.0, math.pi, 3.5, 12.0):
            w = wrap_angle(t)
            assert -math.pi <= w < math.pi

    def test_pi_maps_to_minus_pi(self):
        assert wrap_angle(math.pi) == pytest.approx(-math.pi)

    @given(st.floats(-100.0, 100.0))
    def test_preserves_direction(self, t):
        w = wrap_angle(t)
        assert math.cos(w) == pytest.approx(math.cos(t), abs=1e-9)
        assert math.sin(w) == pytest.approx(math.sin(t), abs=1e-9)


class TestOverlap:
    def test_far_circles_disjoint(self):
        a = Footprint(Shape.circle(1.0), Pose2(0.0, 0.0))
        b = Footprint(Shape.circle(1.0), Pose2(3.0, 0.0))
        assert not overlap(a, b)

    def test_tangent_circles_touch(self):
        a = Footprint(Shape.circle(1.0), Pose2(0.0, 0.0))
        b = Footprint(Shape.circle(1.0), Pose2(2.0, 0.0))
        assert overlap(a, b)

    def test_rect_circle_close(self):
        # closest rect point (1, 0), gap 0.4 < circle radius 0.5
        rect = Footprint(Shape.rectangle(1.0, 1.0), Pose2(0.0, 0.0))
        circ = Footprint(Shape.circle(0.5), Pose2(1.4, 0.0))
        assert overlap(rect, circ)
        assert overlap_oracle(rect, circ)

    def test_symmetry_random_pairs(self):
        rng = random.Random(7)
        for _ in range(300):
            a, b = random_footprint(rng), random_footprint(rng)
            assert overlap(a, b) == overlap(b, a)

    def test_agrees_with_boundary_sampling_oracle(self):
        rng = random.Random(123)
        checked = 0
        for _ in range(1000):
            a, b = random_footprint(rng), random_footprint(rng)
            got = overlap(a, b)
            want = overlap_oracle_fast(a, b)
            if got != want:
                pen = penetration(a, b)
                depth = pen[0] if pen is not None else 0.0
                assert depth < 1e-6, f"disagreement at depth {depth}"
            checked += 1
        assert checked == 1000

    def test_penetration_resolves_overlap(self):
        rng = random.Random(42)
        for _ in range(300):
            a, b = random_footprint(rng), random_footprint(rng)
            pen = penetration(a, b)
            if pen is None or pen[0] == 0.0:
                continue
            depth, nx, ny = pen
            moved = Footprint(
                a.shape,
                Pose2(a.pose.x + nx * (depth + 1e-9), a.pose.y + ny * (depth + 1e-9), a.pose.theta),
            )
            pen2 = penetration(moved, b)
            assert pen2 is None or pen2[0] < 1e-6


class TestRayAabb:
    def test_axis_entry(self):
        box = Aabb((2.0, -1.0), (3.0, 1.0))
        assert ray_aabb_intersect((0.0, 0.0), (1.0, 0.0), box) == pytest.approx((2.0, 0.0))

    def test_miss(self):
        box = Aabb((2.0, -1.0), (3.0, 1.0))
        assert ray_aabb_intersect((0.0, 0.0), (0.0, 1.0), box) is None

    def test_diagonal_entry_governed_by_y_slab(self):
        box = Aabb((1.0, 2.0), (3.0, 4.0))
        d = (math.sqrt(0.5), math.sqrt(0.5))
        assert ray_aabb_intersect((0.0, 0.0), d, box) == pytest.approx((2.0, 2.0))

    def test_inside_returns_exit(self):
        box = Aabb((-1.0, -1.0), (1.0, 1.0))
        assert ray_aabb_intersect((0.0, 0.0), (1.0, 0.0), box) == pytest.approx((1.0, 0.0))

    def test_residuals_on_random_rays(self):
        rng = random.Random(5)
        hits = 0
        for _ in range(2000):
            o = (rng.uniform(-2, 2), rng.uniform(-2, 2))
            t = rng.uniform(0, 2 * math.pi)
            d = (math.cos(t), math.sin(t))
            lo = (rng.uniform(-1, 1), rng.uniform(-1, 1))
            box = Aabb(lo, (lo[0] + rng.uniform(0.1, 2), lo[1] + rng.uniform(0.1, 2)))
            p = ray_aabb_intersect(o, d, box)
            if p is None:
                continue
            hits += 1
            # on the box boundary
            db = min(
                abs(p[0] - box.min[0]), abs(p[0] - box.max[0]),
                abs(p[1] - box.min[1]), abs(p[1] - box.max[1]),
            )
            assert db <= 1e-9
            assert box.min[0] - 1e-9 <= p[0] <= box.max[0] + 1e-9
            assert box.min[1] - 1e-9 <= p[1] <= box.max[1] + 1e-9
            # on the ray
            cross = abs((p[0] - o[0]) * d[1] - (p[1] - o[1]) * d[0])
            assert cross <= 1e-9
            assert (p[0] - o[0]) * d[0] + (p[1] - o[1]) * d[1] >= -1e-9
        assert hits > 200


class TestGridMask:
    def test_index_round_trip(self):
        g = GridMask.create((0.13, -0.27), 0.01, 40, 30)
        for i in (0, 7, 39):
            for j in (0, 11, 29):
                x, y = g.cell_center(i, j)
                assert g.world_to_cell(x, y) == (i, j)

    def test_over_box(self):
        g = GridMask.over_box(Aabb((0.0, 0.0), (0.6, 0.4)), 0.01)
        assert (g.width, g.height) == (60, 40)


class TestRasterizeSweep:
    def test_corner_centered_box_covers_2x2(self):
        # 2 cm box centered on a lattice corner -> the 4 surrounding centers
        g = GridMask.create((0.0, 0.0), 0.01, 20, 20)
        out = rasterize_sweep([Pose2(0.1, 0.1, 0.0)], Shape.rectangle(0.01, 0.01), g)
        assert out.count() == 4
        assert sorted(out.iter_set_cells()) == [(9, 9), (9, 10), (10, 9), (10, 10)]

    def test_subcell_footprint_between_centers_empty(self):
        g = GridMask.create((0.0, 0.0), 0.01, 20, 20)
        # 2 mm box centered on a lattice corner: covers no cell center
        out = rasterize_sweep([Pose2(0.1, 0.1, 0.0)], Shape.rectangle(0.002, 0.002), g)
        assert out.count() == 0

    def test_matches_bruteforce_on_random_sweeps(self):
        rng = random.Random(99)
        g = GridMask.create((0.0, 0.0), 0.01, 30, 30)
        for _ in range(20):
            if rng.random() < 0.5:
                shape = Shape.circle(rng.uniform(0.005, 0.04))
            else:
                shape = Shape.rectangle(rng.uniform(0.005, 0.04), rng.uniform(0.005, 0.04))
            poses = [
                Pose2(rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3), rng.uniform(-3, 3))
                for _ in range(rng.randint(1, 4))
            ]
            got = rasterize_sweep(poses, shape, g)
            want = g.copy()
            for p in interpolate_poses(poses, g.resolution / 2.0):
                fp = Footprint(shape, p)
                for i in range(want.width):
                    for j in range(want.height):
                        cx, cy = want.cell_center(i, j)
                        if point_in(fp, cx, cy):
                            want.bits[i, j] = True
            assert got == want

    def test_monotone_in_waypoints(self):
        g = GridMask.create((0.0, 0.0), 0.01, 30, 30)
        shape = Shape.circle(0.02)
        poses = [Pose2(0.05, 0.05), Pose2(0.2, 0.05)]
        base = rasterize_sweep(poses, shape, g)
        more = rasterize_sweep(poses + [Pose2(0.2, 0.2)], shape, g)
        assert bool(np.all(more.bits[base.bits]))

    def test_three_cell_sweep(self):
        g = GridMask.create((0.0, 0.0), 0.01, 30, 30)
        # sub-cell-width footprint swept along a row of 3 cell centers
        shape = Shape.rectangle(0.004, 0.004)
        poses = [Pose2(0.105, 0.105), Pose2(0.125, 0.105)]
        out = rasterize_sweep(poses, shape, g)
        assert sorted(out.iter_set_cells()) == [(10, 10), (11, 10), (12, 10)]


class TestOverlapGrid:
    def test_matches_scalar_overlap(self):
        rng = random.Random(3)
        for _ in range(50):
            shape = (
                Shape.circle(rng.uniform(0.01, 0.05))
                if rng.random() < 0.5
                else Shape.rectangle(rng.uniform(0.01, 0.05), rng.uniform(0.01, 0.05))
            )
            theta = rng.uniform(-3, 3)
            obstacle = random_footprint(rng)
            xs = np.array([rng.uniform(-0.2, 0.2) for _ in range(20)])
            ys = np.array([rng.uniform(-0.2, 0.2) for _ in range(20)])
            got = overlap_grid(shape, theta, xs, ys, obstacle)
            for k in range(20):
                fp = Footprint(shape, Pose2(xs[k], ys[k], theta))
                assert got[k] == overlap(fp, obstacle)


class TestFootprintOverlapsMask:
    def test_set_cells_are_solid_squares(self):
        g = GridMask.create((0.0, 0.0), 0.01, 20, 20)
        g.bits[5, 5] = True
        # footprint poking into cell (5,5)'s square but missing its center
        fp = Footprint(Shape.circle(0.003), Pose2(0.051, 0.051))
        assert footprint_overlaps_mask(fp, g)
        far = Footprint(Shape.circle(0.003), Pose2(0.151, 0.151))
        assert not footprint_overlaps_mask(far, g)
