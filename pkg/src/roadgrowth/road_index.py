"""Per-cell index of intersecting road ids and per-cell fragment extraction.

The index maps every grid cell to the sorted ids of roads touching its box.
Cells are registered conservatively: every cell whose (slightly padded) box
the segment touches is included, plus the integer line walk between the
endpoint cells, so neighborhood lookups never miss a road. Spurious entries
cost only a wasted clip later, because fragment extraction re-clips each
candidate road exactly.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OutOfExtentError, ParseError
from .formats import RoadNetwork
from .geometry import (
    BBox,
    GeoCoord,
    GeoTransform,
    Polyline,
    bresenham_line,
    clip_polyline_to_bbox,
    coord2pixel,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_FRAGMENT_POINTS = 18
_BOUNDARY_PAD = 1e-9


@dataclass
class RoadCellIndex:
    n_rows: int
    n_cols: int
    lists: list[list[list[int]]]

    def ids_at(self, row: int, col: int) -> list[int]:
        return self.lists[row][col]

    def ids_near(self, row: int, col: int, radius: int) -> list[int]:
        """Sorted, duplicate-free union over the Moore neighborhood."""
        ids: set[int] = set()
        for r in range(max(0, row - radius), min(self.n_rows, row + radius + 1)):
            for c in range(max(0, col - radius), min(self.n_cols, col + radius + 1)):
                ids.update(self.lists[r][c])
        return sorted(ids)

    def presence(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols), dtype=np.uint8)
        for r in range(self.n_rows):
            for c in range(self.n_cols):
                if self.lists[r][c]:
                    out[r, c] = 1
        return out


def _segment_cells(x0, y0, x1, y1, gt: GeoTransform, pad=_BOUNDARY_PAD):
    """Yield (row, col) of every cell whose padded closed box the segment touches."""
    ox, oy, pw, ph = gt.origin_x, gt.origin_y, gt.pixel_w, gt.pixel_h
    dx = x1 - x0
    dy = y1 - y0
    jmin = max(0, int(math.floor((min(x0, x1) - pad - ox) / pw)))
    jmax = min(gt.n_cols - 1, int(math.floor((max(x0, x1) + pad - ox) / pw)))
    for j in range(jmin, jmax + 1):
        slab_lo = ox + j * pw - pad
        slab_hi = ox + (j + 1) * pw + pad
        if dx == 0.0:
            if not (slab_lo <= x0 <= slab_hi):
                continue
            t0, t1 = 0.0, 1.0
        else:
            ta = (slab_lo - x0) / dx
            tb = (slab_hi - x0) / dx
            t0 = max(0.0, min(ta, tb))
            t1 = min(1.0, max(ta, tb))
            if t0 > t1:
                continue
        ya = y0 + t0 * dy
        yb = y0 + t1 * dy
        y_lo = min(ya, yb) - pad
        y_hi = max(ya, yb) + pad
        imin = max(0, int(math.floor((oy - y_hi) / ph)))
        imax = min(gt.n_rows - 1, int(math.floor((oy - y_lo) / ph)))
        for i in range(imin, imax + 1):
            yield i, j


def build_road_index(roads: RoadNetwork, gt: GeoTransform, *, out_of_extent: str = "error") -> RoadCellIndex:
    """Register every road id into each grid cell its geometry passes through.

    ``out_of_extent`` is either ``"error"`` (reject roads leaving the grid)
    or ``"clip"`` (index only the in-grid portions, with a warning).
    """
    if out_of_extent not in ("error", "clip"):
        raise ConfigError(f"out_of_extent must be 'error' or 'clip', got {out_of_extent!r}")
    cells: list[list[set[int]]] = [
        [set() for _ in range(gt.n_cols)] for _ in range(gt.n_rows)
    ]
    extent = gt.extent
    for road in roads.roads:
        pts = road.geometry.points
        inside = (
            (pts[:, 0] >= extent.min_x)
            & (pts[:, 0] <= extent.max_x)
            & (pts[:, 1] >= extent.min_y)
            & (pts[:, 1] <= extent.max_y)
        )
        if inside.all():
            pieces = [road.geometry]
        elif out_of_extent == "error":
            raise OutOfExtentError(
                f"road {road.road_id} has coordinates outside the grid extent"
            )
        else:
            pieces = clip_polyline_to_bbox(road.geometry, extent)
            log.warning("road %d extends outside the grid extent; clipped", road.road_id)
        for piece in pieces:
            p = piece.points
            for i in range(len(p) - 1):
                x0, y0 = p[i]
                x1, y1 = p[i + 1]
                touched = set(_segment_cells(x0, y0, x1, y1, gt))
                a = coord2pixel(GeoCoord(x0, y0), gt)
                b = coord2pixel(GeoCoord(x1, y1), gt)
                touched.update((q.row, q.col) for q in bresenham_line(a, b))
                for r, c in touched:
                    cells[r][c].add(road.road_id)
    lists = [[sorted(s) for s in row] for row in cells]
    return RoadCellIndex(gt.n_rows, gt.n_cols, lists)


def neighborhood_bbox(row: int, col: int, gt: GeoTransform, radius: int) -> BBox:
    """Box of the (2r+1)x(2r+1) cell block around (row, col), clipped at grid borders."""
    r0 = max(0, row - radius)
    r1 = min(gt.n_rows - 1, row + radius)
    c0 = max(0, col - radius)
    c1 = min(gt.n_cols - 1, col + radius)
    return BBox(
        gt.origin_x + c0 * gt.pixel_w,
        gt.origin_y - (r1 + 1) * gt.pixel_h,
        gt.origin_x + (c1 + 1) * gt.pixel_w,
        gt.origin_y - r0 * gt.pixel_h,
    )


def _fragments_for_cell(row, col, index, geoms, gt, radius, max_points):
    ids = index.ids_near(row, col, radius)
    if not ids:
        return None, 0
    box = neighborhood_bbox(row, col, gt, radius)
    seqs = []
    truncated = 0
    for rid in ids:
        for piece in clip_polyline_to_bbox(geoms[rid], box):
            pts = piece.points
            if pts.shape[0] > max_points:
                pts = pts[:max_points]
                truncated += 1
            seqs.append(pts)
    return (seqs or None), truncated


def _fragment_rows(task):
    index, geoms, gt, rows, radius, max_points = task
    out = {}
    truncated = 0
    for row in rows:
        for col in range(gt.n_cols):
            seqs, t = _fragments_for_cell(row, col, index, geoms, gt, radius, max_points)
            truncated += t
            if seqs:
                out[(row, col)] = seqs
    return out, truncated


def extract_fragments(
    index: RoadCellIndex,
    roads: RoadNetwork,
    gt: GeoTransform,
    radius: int = 1,
    max_points: int = DEFAULT_MAX_FRAGMENT_POINTS,
    workers: int = 1,
) -> dict[tuple[int, int], list[np.ndarray]]:
    """Clip every candidate road to each cell's neighborhood box.

    Returns a map from (row, col) to the list of clipped coordinate
    sequences, candidate roads taken from the index union over the cell's
    Moore neighborhood. Per cell, sequences are ordered by ascending road id
    and then by position along the road. Sequences longer than
    ``max_points`` are truncated to their first ``max_points`` points.
    """
    if radius < 0:
        raise ConfigError("radius must be >= 0")
    if max_points < 1:
        raise ConfigError("max_points must be >= 1")
    geoms = roads.geometries_by_id()
    all_rows = list(range(gt.n_rows))
    if workers > 1 and gt.n_rows > 1:
        n_chunks = min(workers * 2, gt.n_rows)
        chunks = [all_rows[i::n_chunks] for i in range(n_chunks)]
        tasks = [(index, geoms, gt, chunk, radius, max_points) for chunk in chunks]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_fragment_rows, tasks))
    else:
        parts = [_fragment_rows((index, geoms, gt, all_rows, radius, max_points))]
    out: dict[tuple[int, int], list[np.ndarray]] = {}
    truncated = 0
    for part, t in parts:
        out.update(part)
        truncated += t
    if truncated:
        log.warning("truncated %d fragment(s) to %d points", truncated, max_points)
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# index persistence (text)
# ---------------------------------------------------------------------------

def write_road_index(index: RoadCellIndex, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"ROADINDEX 1 {index.n_rows} {index.n_cols}\n")
        for r in range(index.n_rows):
            for c in range(index.n_cols):
                ids = index.lists[r][c]
                if ids:
                    fh.write(f"{r} {c} {len(ids)} " + " ".join(map(str, ids)) + "\n")


def read_road_index(path) -> RoadCellIndex:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("line 1: empty road index file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "ROADINDEX" or head[1] != "1":
        raise ParseError("line 1: expected 'ROADINDEX 1 <rows> <cols>'")
    try:
        n_rows, n_cols = int(head[2]), int(head[3])
    except ValueError as exc:
        raise ParseError("line 1: non-integer grid size") from exc
    lists: list[list[list[int]]] = [[[] for _ in range(n_cols)] for _ in range(n_rows)]
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) < 3:
            raise ParseError(f"line {ln}: expected 'row col n ids...'")
        try:
            r, c, n = int(tokens[0]), int(tokens[1]), int(tokens[2])
            ids = [int(t) for t in tokens[3:]]
        except ValueError as exc:
            raise ParseError(f"line {ln}: non-integer field") from exc
        if len(ids) != n:
            raise ParseError(f"line {ln}: expected {n} ids, got {len(ids)}")
        if not (0 <= r < n_rows and 0 <= c < n_cols):
            raise ParseError(f"line {ln}: cell ({r}, {c}) outside grid")
        lists[r][c] = sorted(ids)
    return RoadCellIndex(n_rows, n_cols, lists)
