"""Shared grid-planning machinery: vectorized placement masks over cell
centers, mask dilation by a footprint, breadth-first distance fields, and a
weighted A* over 8-connected lattices."""
from __future__ import annotations

import heapq
import math
import time
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry2d import Footprint, GridMask, Pose2, Shape, overlap_grid

SQRT2 = math.sqrt(2.0)
_ORIGIN_POSE = Pose2(0.0, 0.0, 0.0)


class DeadlineExceeded(Exception):
    pass


def blocked_mask(
    shape: Shape,
    theta: float,
    cx: np.ndarray,
    cy: np.ndarray,
    obstacles: list[Footprint],
    inflate: float = 0.0,
) -> np.ndarray:
    """Cells where the shape placed at the cell center overlaps any obstacle."""
    out = np.zeros(cx.shape, dtype=bool)
    for fp in obstacles:
        out |= overlap_grid(shape, theta, cx, cy, fp, inflate=inflate)
    return out


def containment_mask(
    shape: Shape,
    theta: float,
    cx: np.ndarray,
    cy: np.ndarray,
    x_lo: float,
    x_hi: float,
    y_lo: float | None,
    y_hi: float | None,
) -> np.ndarray:
    """Cells where the placed shape stays within the given wall planes (a
    None bound means that side is open)."""
    ex, ey = shape.world_extents(theta)
    ok = (cx - ex >= x_lo) & (cx + ex <= x_hi)
    if y_lo is not None:
        ok &= cy - ey >= y_lo
    if y_hi is not None:
        ok &= cy + ey <= y_hi
    return ok


def dilate_by_shape(mask: GridMask, shape: Shape, theta: float) -> np.ndarray:
    """Cells where the shape placed at the cell center overlaps the square of
    any set cell (the footprint-against-mask test, as a grid)."""
    if not mask.bits.any():
        return np.zeros_like(mask.bits)
    res = mask.resolution
    ex, ey = shape.world_extents(theta)
    kx = int(math.ceil((ex + res) / res))
    ky = int(math.ceil((ey + res) / res))
    offs = np.arange(-kx, kx + 1) * res
    offy = np.arange(-ky, ky + 1) * res
    ox, oy = np.meshgrid(offs, offy, indexing="ij")
    cell = Footprint(Shape.rectangle(res / 2.0, res / 2.0), _ORIGIN_POSE)
    kernel = overlap_grid(shape, theta, ox, oy, cell)
    return ndimage.binary_dilation(mask.bits, structure=kernel)


def bfs_distance(goals: np.ndarray, passable: np.ndarray) -> np.ndarray:
    """4-connected hop distance from the nearest goal cell, inf when
    unreachable. goals and passable are boolean grids."""
    dist = np.full(passable.shape, np.inf)
    queue: deque[tuple[int, int]] = deque()
    gi, gj = np.nonzero(goals & passable)
    for i, j in zip(gi.tolist(), gj.tolist()):
        dist[i, j] = 0.0
        queue.append((i, j))
    w, h = passable.shape
    while queue:
        i, j = queue.popleft()
        d = dist[i, j] + 1.0
        for ni, nj in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= ni < w and 0 <= nj < h and passable[ni, nj] and d < dist[ni, nj]:
                dist[ni, nj] = d
                queue.append((ni, nj))
    return dist


_MOVES8 = (
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT2),
    (1, -1, SQRT2),
    (-1, 1, SQRT2),
    (-1, -1, SQRT2),
)


@dataclass
class LatticePath:
    cells: list[tuple[int, int]]
    cost: float  # euclidean length in cell units
    expansions: int


def weighted_astar(
    passable: np.ndarray,
    start: tuple[int, int],
    goal: tuple[int, int],
    weight: float = 2.0,
    deadline: float | None = None,
) -> LatticePath | None:
    """8-connected weighted A* (f = g + weight * euclidean-to-goal). Returns
    None when no path exists. Cost is within `weight` of the lattice optimum."""
    w, h = passable.shape
    if not (0 <= start[0] < w and 0 <= start[1] < h) or not passable[start]:
        return None
    if not (0 <= goal[0] < w and 0 <= goal[1] < h) or not passable[goal]:
        return None

    def hfun(i: int, j: int) -> float:
        return math.hypot(i - goal[0], j - goal[1])

    g_best: dict[tuple[int, int], float] = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    heap: list[tuple[float, int, float, tuple[int, int]]] = [
        (weight * hfun(*start), counter, 0.0, start)
    ]
    expansions = 0
    while heap:
        _, _, g, cell = heapq.heappop(heap)
        if g > g_best.get(cell, math.inf):
            continue
        expansions += 1
        if deadline is not None and expansions % 1024 == 0 and time.monotonic() > deadline:
            raise DeadlineExceeded
        if cell == goal:
            cells = [cell]
            while cell in parent:
                cell = parent[cell]
                cells.append(cell)
            cells.reverse()
            return LatticePath(cells, g, expansions)
        ci, cj = cell
        for di, dj, step in _MOVES8:
            ni, nj = ci + di, cj + dj
            if not (0 <= ni < w and 0 <= nj < h) or not passable[ni, nj]:
                continue
            ng = g + step
            nxt = (ni, nj)
            if ng < g_best.get(nxt, math.inf) - 1e-12:
                g_best[nxt] = ng
                parent[nxt] = cell
                counter += 1
                heapq.heappush(heap, (ng + weight * hfun(ni, nj), counter, ng, nxt))
    return None


@dataclass
class AnchoredLattice:
    """A lattice of candidate gripper positions anchored so that the goal
    point is exactly a node: node (i, j) sits at anchor + (i, j) * res."""

    anchor: tuple[float, float]
    resolution: float
    i0: int
    j0: int
    cx: np.ndarray
    cy: np.ndarray

    @staticmethod
    def over_region(
        anchor: tuple[float, float],
        resolution: float,
        x_lo: float,
        x_hi: float,
        y_lo: float,
        y_hi: float,
    ) -> "AnchoredLattice":
        i0 = int(math.ceil((x_lo - anchor[0]) / resolution - 1e-9))
        i1 = int(math.floor((x_hi - anchor[0]) / resolution + 1e-9))
        j0 = int(math.ceil((y_lo - anchor[1]) / resolution - 1e-9))
        j1 = int(math.floor((y_hi - anchor[1]) / resolution + 1e-9))
        xs = anchor[0] + np.arange(i0, i1 + 1) * resolution
        ys = anchor[1] + np.arange(j0, j1 + 1) * resolution
        cx, cy = np.meshgrid(xs, ys, indexing="ij")
        return AnchoredLattice(anchor, resolution, i0, j0, cx, cy)

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        """Grid index of the nearest node to (x, y)."""
        i = int(round((x - self.anchor[0]) / self.resolution)) - self.i0
        j = int(round((y - self.anchor[1]) / self.resolution)) - self.j0
        return (i, j)

    def world_of(self, i: int, j: int) -> tuple[float, float]:
        return (
            self.anchor[0] + (i + self.i0) * self.resolution,
            self.anchor[1] + (j + self.j0) * self.resolution,
        )
