"""Deterministic synthetic scenarios: random road networks plus three
built-up epochs whose growth is road-driven by construction.

Growth rule per step: a non-built cell with at least one built Moore
neighbor converts with probability ``p_near`` when its Chebyshev distance to
a road-covered cell is at most ``d_road``, else with ``p_far``. Cells never
revert, so built-up sets are monotone across epochs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .formats import BuiltupGrid, RasterGrid, Road, RoadNetwork, write_grid, write_raster_manifest, write_roads
from .geometry import GeoTransform, Polyline
from .road_index import build_road_index

log = logging.getLogger(__name__)

__all__ = ["SynthConfig", "Scenario", "generate", "write_scenario"]

PERSISTENCE_BAND = (0.80, 0.95)


@dataclass
class SynthConfig:
    n_rows: int = 64
    n_cols: int = 64
    n_roads: int = 10
    seed: int = 0
    p_near: float = 0.65
    p_far: float = 0.02
    d_road: int = 1
    target_persistence: float = 0.875
    road_seed_prob: float = 0.45
    n_bg_clusters: int = 10

    def __post_init__(self):
        if self.n_rows < 4 or self.n_cols < 4:
            raise ConfigError("grid must be at least 4x4")
        if self.n_roads < 0:
            raise ConfigError("n_roads must be >= 0")
        if not (0.0 <= self.p_far < self.p_near <= 1.0):
            raise ConfigError("require 0 <= p_far < p_near <= 1")
        if self.d_road < 1:
            raise ConfigError("d_road must be >= 1")
        if not (0.0 < self.target_persistence < 1.0):
            raise ConfigError("target_persistence must be in (0, 1)")


@dataclass
class Scenario:
    roads: RoadNetwork
    transform: GeoTransform
    builtup_t0: BuiltupGrid
    builtup_t1: BuiltupGrid
    builtup_t2: BuiltupGrid
    raster: RasterGrid


def _random_roads(rng: np.random.Generator, cfg: SynthConfig, gt: GeoTransform) -> RoadNetwork:
    ext = gt.extent
    roads = []
    for rid in range(cfg.n_roads):
        x = rng.uniform(ext.min_x + 1.0, ext.max_x - 1.0)
        y = rng.uniform(ext.min_y + 1.0, ext.max_y - 1.0)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        pts = [(x, y)]
        n_steps = int(rng.integers(12, 30))
        for _ in range(n_steps):
            heading += rng.normal(0.0, 0.35)
            step = rng.uniform(1.5, 3.0)
            x += math.cos(heading) * step
            y += math.sin(heading) * step
            cx = min(max(x, ext.min_x), ext.max_x)
            cy = min(max(y, ext.min_y), ext.max_y)
            if (cx, cy) != pts[-1]:
                pts.append((cx, cy))
            if cx != x or cy != y:
                break
            x, y = cx, cy
        roads.append(Road(rid, Polyline(pts)))
    return RoadNetwork(roads)


def _neighbor_count(cells: np.ndarray) -> np.ndarray:
    padded = np.zeros((cells.shape[0] + 2, cells.shape[1] + 2), dtype=int)
    padded[1:-1, 1:-1] = cells
    total = np.zeros_like(cells, dtype=int)
    for dr in range(3):
        for dc in range(3):
            if dr == 1 and dc == 1:
                continue
            total += padded[dr : dr + cells.shape[0], dc : dc + cells.shape[1]]
    return total


def _dilate(mask: np.ndarray, times: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(times):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        grown[1:, 1:] |= out[:-1, :-1]
        grown[1:, :-1] |= out[:-1, 1:]
        grown[:-1, 1:] |= out[1:, :-1]
        grown[:-1, :-1] |= out[1:, 1:]
        out = grown
    return out


def _chebyshev_distance(mask: np.ndarray) -> np.ndarray:
    """Per-cell Chebyshev distance to the nearest set cell."""
    if not mask.any():
        return np.full(mask.shape, float(max(mask.shape)))
    dist = np.full(mask.shape, np.inf)
    dist[mask] = 0.0
    frontier = mask.copy()
    d = 0
    while not frontier.all():
        d += 1
        grown = _dilate(frontier, 1)
        dist[grown & ~frontier] = d
        frontier = grown
    return dist


def _grow(cells: np.ndarray, near_road: np.ndarray, p_near: float, p_far: float, rng: np.random.Generator) -> np.ndarray:
    frontier = (cells == 0) & (_neighbor_count(cells) > 0)
    prob = np.where(near_road, p_near, p_far)
    draws = rng.random(cells.shape)
    return (cells.astype(bool) | (frontier & (draws < prob))).astype(np.uint8)


def _smooth_noise(rng: np.random.Generator, n_rows: int, n_cols: int, coarse: int = 8) -> np.ndarray:
    control = rng.random((coarse + 1, coarse + 1))
    rows = np.linspace(0.0, coarse, n_rows)
    cols = np.linspace(0.0, coarse, n_cols)
    r0 = np.clip(np.floor(rows).astype(int), 0, coarse - 1)
    c0 = np.clip(np.floor(cols).astype(int), 0, coarse - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    tl = control[np.ix_(r0, c0)]
    tr = control[np.ix_(r0, c0 + 1)]
    bl = control[np.ix_(r0 + 1, c0)]
    br = control[np.ix_(r0 + 1, c0 + 1)]
    return tl * (1 - fr) * (1 - fc) + tr * (1 - fr) * fc + bl * fr * (1 - fc) + br * fr * fc


def generate(cfg: SynthConfig) -> Scenario:
    """Build a scenario; identical configs give bit-identical outputs."""
    gt = GeoTransform(0.0, float(cfg.n_rows), 1.0, 1.0, cfg.n_rows, cfg.n_cols)
    rng = np.random.default_rng(cfg.seed)
    roads = _random_roads(rng, cfg, gt)
    road_mask = build_road_index(roads, gt).presence().astype(bool)
    near_road = _dilate(road_mask, cfg.d_road)

    t0 = road_mask & (rng.random(road_mask.shape) < cfg.road_seed_prob)
    for _ in range(cfg.n_bg_clusters):
        r = int(rng.integers(0, cfg.n_rows - 1))
        c = int(rng.integers(0, cfg.n_cols - 1))
        t0[r : r + 2, c : c + 2] = True
    t0 = t0.astype(np.uint8)
    t1 = _grow(t0, near_road, cfg.p_near, cfg.p_far, rng)
    t2 = _grow(t1, near_road, cfg.p_near, cfg.p_far, rng)

    persistence = 1.0 - float(np.mean(t1 != t0))
    if not (PERSISTENCE_BAND[0] <= persistence <= PERSISTENCE_BAND[1]):
        log.warning(
            "scenario seed %d persistence %.3f outside band %s",
            cfg.seed, persistence, PERSISTENCE_BAND,
        )

    intensity = np.exp(-_chebyshev_distance(t0.astype(bool)) / 4.0)
    noise = _smooth_noise(rng, cfg.n_rows, cfg.n_cols)
    raster = RasterGrid(gt, [intensity, noise])
    return Scenario(
        roads,
        gt,
        BuiltupGrid(gt, t0),
        BuiltupGrid(gt, t1),
        BuiltupGrid(gt, t2),
        raster,
    )


def write_scenario(scn: Scenario, out_dir) -> dict[str, str]:
    """Write a scenario's files into a directory; returns name -> path."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "roads": os.path.join(out_dir, "roads.geojson"),
        "builtup_t0": os.path.join(out_dir, "builtup_t0.asc"),
        "builtup_t1": os.path.join(out_dir, "builtup_t1.asc"),
        "builtup_t2": os.path.join(out_dir, "builtup_t2.asc"),
    }
    write_roads(scn.roads, paths["roads"])
    write_grid(scn.builtup_t0, paths["builtup_t0"])
    write_grid(scn.builtup_t1, paths["builtup_t1"])
    write_grid(scn.builtup_t2, paths["builtup_t2"])
    paths["raster_manifest"] = write_raster_manifest(scn.raster, out_dir, "raster")
    return paths
