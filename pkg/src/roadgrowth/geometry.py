"""Planar grid geometry: coordinate/pixel transforms, line rasterization and
parametric polyline clipping.

Coordinates are plain map units on a north-up grid: x grows east, y grows
north, row indices grow south. Nothing here knows about coordinate reference
systems; callers are responsible for keeping all inputs in one frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfExtentError, ValidationError

__all__ = [
    "GeoTransform",
    "GeoCoord",
    "PixelCoord",
    "BBox",
    "Polyline",
    "coord2pixel",
    "pixel2bbox",
    "bresenham_line",
    "clip_polyline_to_bbox",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in map units, boundary included."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise ValidationError(
                f"degenerate bbox ({self.min_x}, {self.min_y}, {self.max_x}, {self.max_y})"
            )

    def contains(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y


@dataclass(frozen=True)
class GeoTransform:
    """North-up grid georeferencing anchored at the north-west corner."""

    origin_x: float
    origin_y: float
    pixel_w: float
    pixel_h: float
    n_rows: int
    n_cols: int

    def __post_init__(self):
        if not (self.pixel_w > 0 and self.pixel_h > 0):
            raise ValidationError("pixel size must be positive")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValidationError("grid needs at least one row and one column")

    @property
    def extent(self) -> BBox:
        return BBox(
            self.origin_x,
            self.origin_y - self.n_rows * self.pixel_h,
            self.origin_x + self.n_cols * self.pixel_w,
            self.origin_y,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)


@dataclass(frozen=True)
class GeoCoord:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite coordinate ({self.x}, {self.y})")


@dataclass(frozen=True)
class PixelCoord:
    row: int
    col: int


class Polyline:
    """Ordered coordinate sequence with at least two points.

    Consecutive duplicate points are rejected; ingestion code is expected to
    drop them before constructing.
    """

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError(f"polyline points must be (n, 2), got {pts.shape}")
        if pts.shape[0] < 2:
            raise ValidationError("polyline needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("polyline has non-finite coordinates")
        if np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise ValidationError("polyline has consecutive duplicate points")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self) -> str:
        return f"Polyline({self.points.shape[0]} points)"

    def length(self) -> float:
        d = np.diff(self.points, axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def bbox(self) -> BBox:
        xs, ys = self.points[:, 0], self.points[:, 1]
        return BBox(float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))


def coord2pixel(c: GeoCoord, gt: GeoTransform) -> PixelCoord:
    """Map a coordinate to the grid cell containing it.

    Cells own their north and west edges: a point on an interior shared edge
    belongs to the higher-index cell, and points exactly on the south/east
    grid boundary clamp into the last row/column.
    """
    ext = gt.extent
    if not ext.contains(c.x, c.y):
        raise OutOfExtentError(f"coordinate ({c.x}, {c.y}) outside grid extent")
    col = int(math.floor((c.x - gt.origin_x) / gt.pixel_w))
    row = int(math.floor((gt.origin_y - c.y) / gt.pixel_h))
    return PixelCoord(min(row, gt.n_rows - 1), min(col, gt.n_cols - 1))


def pixel2bbox(p: PixelCoord, gt: GeoTransform) -> BBox:
    """Return the map-unit bounding box of a grid cell."""
    if not (0 <= p.row < gt.n_rows and 0 <= p.col < gt.n_cols):
        raise OutOfExtentError(f"pixel ({p.row}, {p.col}) outside {gt.n_rows}x{gt.n_cols} grid")
    min_x = gt.origin_x + p.col * gt.pixel_w
    max_y = gt.origin_y - p.row * gt.pixel_h
    return BBox(min_x, max_y - gt.pixel_h, min_x + gt.pixel_w, max_y)


def _bresenham(r0: int, c0: int, r1: int, c1: int) -> list[tuple[int, int]]:
    dc = abs(c1 - c0)
    dr = -abs(r1 - r0)
    sc = 1 if c0 < c1 else -1
    sr = 1 if r0 < r1 else -1
    err = dc + dr
    cells = []
    while True:
        cells.append((r0, c0))
        if r0 == r1 and c0 == c1:
            return cells
        e2 = 2 * err
        if e2 >= dr:
            err += dr
            c0 += sc
        if e2 <= dc:
            err += dc
            r0 += sr


def bresenham_line(p: PixelCoord, q: PixelCoord) -> list[PixelCoord]:
    """Integer midpoint rasterization of the segment from p to q.

    Both endpoints are included, consecutive cells are 8-connected and no
    cell repeats. Tie rule: the walk is generated from the lexicographically
    smaller endpoint (so swapping p and q exactly reverses the path), and
    when the ideal line passes exactly halfway between two cells the path
    steps diagonally.
    """
    a = (p.row, p.col)
    b = (q.row, q.col)
    if b < a:
        cells = _bresenham(*b, *a)
        cells.reverse()
    else:
        cells = _bresenham(*a, *b)
    return [PixelCoord(r, c) for r, c in cells]


def _clip_segment(x0, y0, x1, y1, box: BBox):
    """Liang-Barsky parametric clip of one segment against a closed box.

    Returns (u0, u1) with 0 <= u0 <= u1 <= 1, or None when the segment lies
    strictly outside. Points on the boundary count as inside.
    """
    dx = x1 - x0
    dy = y1 - y0
    u0, u1 = 0.0, 1.0
    for p, q in (
        (-dx, x0 - box.min_x),
        (dx, box.max_x - x0),
        (-dy, y0 - box.min_y),
        (dy, box.max_y - y0),
    ):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        r = q / p
        if p < 0.0:
            if r > u1:
                return None
            if r > u0:
                u0 = r
        else:
            if r < u0:
                return None
            if r < u1:
                u1 = r
    return u0, u1


def clip_polyline_to_bbox(poly: Polyline, box: BBox) -> list[Polyline]:
    """Clip a polyline to a closed box into maximal connected pieces.

    Boundary-crossing segments are cut at their parametric intersection
    points; interior vertices of each piece are original input points and
    traversal order is preserved. Pieces that degenerate to a single point
    (pure tangency) are dropped.
    """
    pts = poly.points
    pieces: list[Polyline] = []
    run: list[tuple[float, float]] = []

    def flush():
        nonlocal run
        if len(run) >= 2:
            pieces.append(Polyline(np.array(run)))
        run = []

    for i in range(len(pts) - 1):
        x0, y0 = pts[i]
        x1, y1 = pts[i + 1]
        hit = _clip_segment(x0, y0, x1, y1, box)
        if hit is None:
            flush()
            continue
        u0, u1 = hit
        # Reuse exact endpoints when the cut lands on them, so pieces that
        # continue across shared vertices stay bit-identical to the input.
        if u0 == 0.0:
            ax, ay = x0, y0
        else:
            ax, ay = x0 + u0 * (x1 - x0), y0 + u0 * (y1 - y0)
        if u1 == 1.0:
            bx, by = x1, y1
        else:
            bx, by = x0 + u1 * (x1 - x0), y0 + u1 * (y1 - y0)
        if u0 > 0.0:
            flush()
        if not run:
            run.append((ax, ay))
        if (bx, by) != run[-1]:
            run.append((bx, by))
        if u1 < 1.0:
            flush()
    flush()
    return pieces
