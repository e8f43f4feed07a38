"""Land-change validation: the five-area change taxonomy and the four
standard agreement metrics over it.

Cell categories compare an observed start/end pair of built-up grids with a
predicted end grid:

  A  observed change, predicted persistence (miss)
  B  observed change, predicted the same change (hit)
  C  observed change, predicted a different change (structurally 0 with one
     binary class pair: the only possible change from a state is to the
     other state)
  D  observed persistence, predicted change (false alarm)
  E  observed persistence, predicted persistence
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .formats import BuiltupGrid

__all__ = [
    "ChangeAreas",
    "CAT_CORRECT_PERSISTENCE",
    "CAT_CORRECT_CHANGE",
    "CAT_MISSED_CHANGE",
    "CAT_FALSE_ALARM",
    "CAT_INVALID",
    "ERROR_MAP_PALETTE",
    "compute_areas",
    "area_categories",
    "figure_of_merit",
    "producers_accuracy",
    "users_accuracy",
    "overall_accuracy",
    "metric_values",
    "format_metric",
]

CAT_CORRECT_PERSISTENCE = 0
CAT_CORRECT_CHANGE = 1
CAT_MISSED_CHANGE = 2
CAT_FALSE_ALARM = 3
CAT_INVALID = 4

# persistence-correct white, change-correct green, miss blue, false alarm red
ERROR_MAP_PALETTE = {
    CAT_CORRECT_PERSISTENCE: (255, 255, 255),
    CAT_CORRECT_CHANGE: (0, 255, 0),
    CAT_MISSED_CHANGE: (0, 0, 255),
    CAT_FALSE_ALARM: (255, 0, 0),
    CAT_INVALID: (128, 128, 128),
}


@dataclass(frozen=True)
class ChangeAreas:
    a: int
    b: int
    c: int
    d: int
    e: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d, self.e) < 0:
            raise ValueError("area counts must be non-negative")

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d + self.e


def _cells_and_mask(grid):
    if isinstance(grid, BuiltupGrid):
        return grid.cells, grid.nodata_mask
    return np.asarray(grid), None


def _aligned(obs_t0, obs_t1, pred_t1):
    g0, m0 = _cells_and_mask(obs_t0)
    g1, m1 = _cells_and_mask(obs_t1)
    gp, mp = _cells_and_mask(pred_t1)
    if g0.shape != g1.shape or g0.shape != gp.shape:
        raise DimensionMismatchError(
            f"grids differ: {g0.shape}, {g1.shape}, {gp.shape}"
        )
    valid = np.ones(g0.shape, dtype=bool)
    for m in (m0, m1, mp):
        if m is not None:
            valid &= ~m
    return g0, g1, gp, valid


def area_categories(obs_t0, obs_t1, pred_t1) -> np.ndarray:
    """Per-cell category codes; nodata cells are CAT_INVALID."""
    g0, g1, gp, valid = _aligned(obs_t0, obs_t1, pred_t1)
    obs_change = g0 != g1
    pred_change = g0 != gp
    out = np.full(g0.shape, CAT_INVALID, dtype=np.uint8)
    out[valid & ~obs_change & ~pred_change] = CAT_CORRECT_PERSISTENCE
    out[valid & obs_change & pred_change] = CAT_CORRECT_CHANGE
    out[valid & obs_change & ~pred_change] = CAT_MISSED_CHANGE
    out[valid & ~obs_change & pred_change] = CAT_FALSE_ALARM
    return out


def compute_areas(obs_t0, obs_t1, pred_t1) -> ChangeAreas:
    """Count the five areas over all valid cells.

    With a single binary class pair a change predicted as change is always
    the same change, so C is identically 0; it is kept for fidelity to the
    standard formulas.
    """
    g0, g1, gp, valid = _aligned(obs_t0, obs_t1, pred_t1)
    obs_change = (g0 != g1) & valid
    pred_change = (g0 != gp) & valid
    b = int(np.sum(obs_change & pred_change))
    a = int(np.sum(obs_change & ~pred_change))
    d = int(np.sum(~obs_change & pred_change & valid))
    e = int(np.sum(~obs_change & ~pred_change & valid))
    return ChangeAreas(a, b, 0, d, e)


def _ratio(num: int, den: int) -> float | None:
    if den == 0:
        return None
    return num / den


def figure_of_merit(areas: ChangeAreas) -> float | None:
    """B / (A + B + C + D); None when undefined."""
    return _ratio(areas.b, areas.a + areas.b + areas.c + areas.d)


def producers_accuracy(areas: ChangeAreas) -> float | None:
    """B / (A + B + C); None when undefined."""
    return _ratio(areas.b, areas.a + areas.b + areas.c)


def users_accuracy(areas: ChangeAreas) -> float | None:
    """B / (B + C + D); None when undefined."""
    return _ratio(areas.b, areas.b + areas.c + areas.d)


def overall_accuracy(areas: ChangeAreas) -> float | None:
    """(B + E) / (A + B + C + D + E); None when undefined."""
    return _ratio(areas.b + areas.e, areas.total)


def metric_values(areas: ChangeAreas) -> dict[str, float | None]:
    return {
        "FoM": figure_of_merit(areas),
        "PA": producers_accuracy(areas),
        "UA": users_accuracy(areas),
        "OA": overall_accuracy(areas),
    }


def format_metric(value: float | None) -> str:
    """Render a metric for CSV output; undefined values become "NA"."""
    if value is None:
        return "NA"
    return format(value, ".6f")
