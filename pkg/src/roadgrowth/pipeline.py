"""End-to-end orchestration shared by the CLI sweep command and batch
studies: fit the transition model on the first epoch pair, simulate from the
second epoch, score against the third.

Three feature modes are supported: "no-roads" (raster codes only),
"baseline-raster" (road presence rasterized into an extra band before the
patch autoencoder), and "roads-repr" (learned per-cell road codes as extra
features).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .formats import BuiltupGrid, RasterGrid, RoadNetwork
from .geometry import GeoTransform
from .growth import (
    TreeConfig,
    baseline_rasterize,
    build_feature_matrix,
    extract_training_set,
    feature_layout,
    fit_forest,
    fit_tree,
    simulate_step,
)
from .metrics import area_categories, compute_areas, metric_values
from .nn import SGDConfig
from .raster_encoder import (
    encode_raster,
    new_patch_autoencoder,
    normalize_bands,
    train_patch_autoencoder,
)
from .road_encoder import AxisNormalizer, encode_cells, new_road_encoder, train_road_encoder
from .road_index import build_road_index, extract_fragments
from .synth import Scenario

__all__ = ["MODES", "StudyInputs", "StudyConfig", "raster_code_grid", "road_code_grids", "run_mode", "run_study"]

MODES = ("no-roads", "baseline-raster", "roads-repr")


@dataclass
class StudyInputs:
    roads: RoadNetwork
    transform: GeoTransform
    builtup_t0: BuiltupGrid
    builtup_t1: BuiltupGrid
    builtup_t2: BuiltupGrid
    raster: RasterGrid

    @classmethod
    def from_scenario(cls, scn: Scenario) -> "StudyInputs":
        return cls(
            scn.roads, scn.transform,
            scn.builtup_t0, scn.builtup_t1, scn.builtup_t2,
            scn.raster,
        )


@dataclass
class StudyConfig:
    radius: int = 1
    raster_len: int = 8
    raster_epochs: int = 60
    road_epochs: int = 20
    max_fragment_points: int = 18
    learning_rate: float = 0.1
    batch_size: int = 64
    seed: int = 0
    tree: TreeConfig = field(default_factory=lambda: TreeConfig(max_depth=10, min_samples_leaf=4))
    n_trees: int = 1


def raster_code_grid(raster: RasterGrid, cfg: StudyConfig) -> np.ndarray:
    """Train a patch autoencoder on every cell's patch, then encode all cells."""
    bands = normalize_bands(raster)
    from .raster_encoder import extract_all_patches

    patches = extract_all_patches(bands, cfg.radius)
    ae = new_patch_autoencoder(patches.shape[1], cfg.raster_len, np.random.default_rng(cfg.seed))
    train_patch_autoencoder(
        ae,
        patches,
        SGDConfig(cfg.learning_rate, cfg.batch_size, cfg.raster_epochs, cfg.seed),
    )
    return encode_raster(ae, bands, cfg.radius)


def road_code_grids(inputs: StudyInputs, rep_size: int, cfg: StudyConfig, snapshot_epochs=()):
    """Train the road encoder, returning per-cell code grids per snapshot epoch.

    Returns (codes_by_epoch, history). The final epoch is always included.
    """
    if rep_size % 2 != 0 or rep_size < 2:
        raise ConfigError("rep_size must be even and >= 2")
    gt = inputs.transform
    index = build_road_index(inputs.roads, gt)
    fragments = extract_fragments(index, inputs.roads, gt, cfg.radius, cfg.max_fragment_points)
    enc = new_road_encoder(
        rep_size // 2,
        AxisNormalizer.from_transform(gt),
        seed=cfg.seed,
        max_len=cfg.max_fragment_points,
    )
    wanted = tuple(sorted(set(snapshot_epochs) | {cfg.road_epochs}))
    history, snapshots = train_road_encoder(
        enc,
        fragments,
        SGDConfig(cfg.learning_rate, cfg.batch_size, cfg.road_epochs, cfg.seed),
        snapshot_epochs=wanted,
    )
    codes = {
        epoch: encode_cells(snap, fragments, gt.n_rows, gt.n_cols)
        for epoch, snap in snapshots.items()
    }
    return codes, history


def _fit_and_score(inputs: StudyInputs, raster_codes, road_codes, cfg: StudyConfig):
    layout = feature_layout(
        cfg.radius,
        raster_codes.shape[2],
        0 if road_codes is None else road_codes.shape[2],
    )
    X = build_feature_matrix(inputs.builtup_t0.cells, raster_codes, road_codes, cfg.radius)
    X, y = extract_training_set(inputs.builtup_t0, inputs.builtup_t1, X)
    if cfg.n_trees > 1:
        model = fit_forest(X, y, cfg.n_trees, cfg.tree, cfg.seed, layout)
    else:
        model = fit_tree(X, y, cfg.tree, layout)
    pred, _ = simulate_step(inputs.builtup_t1, model, raster_codes, road_codes, cfg.radius)
    areas = compute_areas(inputs.builtup_t1, inputs.builtup_t2, pred)
    cats = area_categories(inputs.builtup_t1, inputs.builtup_t2, pred)
    return metric_values(areas), cats, model, pred


def run_mode(inputs: StudyInputs, mode: str, rep_size: int, cfg: StudyConfig):
    """Run one (mode, rep_size) study cell; returns (metrics, category map)."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    road_codes = None
    raster = inputs.raster
    if mode == "baseline-raster":
        raster = baseline_rasterize(inputs.roads, inputs.raster)
    raster_codes = raster_code_grid(raster, cfg)
    if mode == "roads-repr":
        codes, _ = road_code_grids(inputs, rep_size, cfg)
        road_codes = codes[cfg.road_epochs]
    metrics, cats, _, _ = _fit_and_score(inputs, raster_codes, road_codes, cfg)
    return metrics, cats


def run_study(
    inputs: StudyInputs,
    modes,
    rep_sizes,
    epoch_checkpoints,
    cfg: StudyConfig,
    scenario_label: str = "synthetic",
):
    """Cross every (rep_size, epoch, mode) cell over shared trained encoders.

    Returns (rows, category_maps): CSV-ready row dicts and per-cell category
    maps keyed by (rep_size, epoch, mode). Modes that ignore rep_size or the
    road-encoder epoch repeat their values across those axes so the output
    table is complete.
    """
    for mode in modes:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
    epochs = tuple(sorted(set(int(e) for e in epoch_checkpoints)))
    if not epochs:
        raise ConfigError("need at least one epoch checkpoint")
    if any(e < 1 for e in epochs):
        raise ConfigError("epoch checkpoints must be >= 1")

    raster_codes_plain = None
    if "no-roads" in modes or "roads-repr" in modes:
        raster_codes_plain = raster_code_grid(inputs.raster, cfg)
    raster_codes_baseline = None
    if "baseline-raster" in modes:
        raster_codes_baseline = raster_code_grid(baseline_rasterize(inputs.roads, inputs.raster), cfg)

    road_codes: dict[int, dict[int, np.ndarray]] = {}
    if "roads-repr" in modes:
        train_cfg = replace(cfg, road_epochs=max(epochs))
        for rep_size in rep_sizes:
            codes, _ = road_code_grids(inputs, rep_size, train_cfg, epochs)
            road_codes[rep_size] = codes

    cached: dict[tuple, tuple] = {}
    rows = []
    maps = {}
    for rep_size in rep_sizes:
        for epoch in epochs:
            for mode in modes:
                if mode == "roads-repr":
                    key = ("roads-repr", rep_size, epoch)
                    if key not in cached:
                        cached[key] = _fit_and_score(
                            inputs, raster_codes_plain, road_codes[rep_size][epoch], cfg
                        )[:2]
                elif mode == "baseline-raster":
                    key = ("baseline-raster",)
                    if key not in cached:
                        cached[key] = _fit_and_score(inputs, raster_codes_baseline, None, cfg)[:2]
                else:
                    key = ("no-roads",)
                    if key not in cached:
                        cached[key] = _fit_and_score(inputs, raster_codes_plain, None, cfg)[:2]
                metrics, cats = cached[key]
                rows.append(
                    {
                        "scenario": scenario_label,
                        "rep_size": rep_size,
                        "epoch": epoch,
                        "method": mode,
                        **metrics,
                    }
                )
                maps[(rep_size, epoch, mode)] = cats
    return rows, maps
