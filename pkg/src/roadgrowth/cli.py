"""Subcommand CLI driving the pipeline stage by stage with file handoff.

Each stage validates its inputs, writes versioned artifacts into the output
directory, and records a machine-readable manifest (config, config hash,
input file hashes, outputs) so any stage can be re-run and audited. Exit
codes: 0 success, 2 validation/config error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import growth, metrics, pipeline, synth
from .errors import ConfigError, PipelineError, ValidationError
from .formats import (
    BuiltupGrid,
    RasterGrid,
    load_roads,
    read_builtup,
    read_cell_vectors,
    read_fragments,
    read_raster_manifest,
    write_cell_vectors,
    write_fragments,
    write_grid,
    write_pgm,
    write_ppm,
)
from .growth import TreeConfig, baseline_rasterize, feature_layout
from .nn import SGDConfig
from .raster_encoder import (
    encode_raster,
    extract_all_patches,
    load_patch_autoencoder,
    new_patch_autoencoder,
    normalize_bands,
    save_patch_autoencoder,
    train_patch_autoencoder,
)
from .road_encoder import (
    AxisNormalizer,
    encode_cells,
    load_road_encoder,
    new_road_encoder,
    save_road_encoder,
    train_road_encoder,
)
from .road_index import (
    build_road_index,
    extract_fragments,
    read_road_index,
    write_road_index,
)

log = logging.getLogger("roadgrowth")

METRIC_COLUMNS = ("scenario", "rep_size", "epoch", "method", "FoM", "PA", "UA", "OA")


@dataclass
class RunConfig:
    """Shared hyperparameters resolved from flags and the config file."""

    rep_size: int = 6
    radius: int = 1
    epochs: int = 20
    learning_rate: float = 0.1
    batch_size: int = 64
    seed: int = 0
    mode: str = "roads-repr"

    def __post_init__(self):
        if self.rep_size < 2 or self.rep_size % 2 != 0:
            raise ConfigError("rep-size must be even and >= 2")
        if self.mode not in pipeline.MODES:
            raise ConfigError(f"mode must be one of {pipeline.MODES}")
        if self.radius < 0:
            raise ConfigError("radius must be >= 0")


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_hash(config: dict) -> str:
    text = "".join(f"{k}={config[k]}\n" for k in sorted(config))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _write_manifest(out_dir: str, stage: str, config: dict, inputs: dict, outputs: list[str]) -> None:
    lines = [
        f"stage={stage}",
        "manifest_version=1",
        f"timestamp={datetime.now(timezone.utc).isoformat()}",
        f"config_hash={_config_hash(config)}",
    ]
    lines += [f"config.{k}={config[k]}" for k in sorted(config)]
    for name in sorted(inputs):
        path = os.fspath(inputs[name])
        lines.append(f"input.{name}={path}")
        lines.append(f"input_sha256.{name}={_sha256(path)}")
    lines += [f"output.{i}={name}" for i, name in enumerate(outputs)]
    with open(os.path.join(out_dir, f"{stage}.manifest"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_metrics_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row["scenario"],
                    row["rep_size"],
                    row["epoch"],
                    row["method"],
                    metrics.format_metric(row["FoM"]),
                    metrics.format_metric(row["PA"]),
                    metrics.format_metric(row["UA"]),
                    metrics.format_metric(row["OA"]),
                ]
            )


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    out = _outdir(args)
    cfg = synth.SynthConfig(
        n_rows=args.rows,
        n_cols=args.cols,
        n_roads=args.n_roads,
        seed=args.seed,
        p_near=args.p_near,
        p_far=args.p_far,
        d_road=args.d_road,
    )
    scn = synth.generate(cfg)
    paths = synth.write_scenario(scn, out)
    _write_manifest(
        out, "synth",
        {k: getattr(cfg, k) for k in ("n_rows", "n_cols", "n_roads", "seed", "p_near", "p_far", "d_road")},
        {}, sorted(os.path.basename(p) for p in paths.values()),
    )
    log.info("scenario written to %s", out)
    return 0


def _load_grid_transform(path):
    return read_builtup(path).transform


def _cmd_index(args) -> int:
    out = _outdir(args)
    roads = load_roads(args.roads, decimals=args.decimals)
    gt = _load_grid_transform(args.grid_t0)
    index = build_road_index(roads, gt, out_of_extent="clip" if args.clip_roads else "error")
    write_road_index(index, os.path.join(out, "road_index.txt"))
    write_pgm(index.presence(), os.path.join(out, "road_presence.pgm"))
    _write_manifest(
        out, "index",
        {"clip_roads": args.clip_roads, "decimals": args.decimals},
        {"roads": args.roads, "grid_t0": args.grid_t0},
        ["road_index.txt", "road_presence.pgm"],
    )
    return 0


def _cmd_pbr(args) -> int:
    out = _outdir(args)
    roads = load_roads(args.roads, decimals=args.decimals)
    gt = _load_grid_transform(args.grid_t0)
    if args.h_index:
        index = read_road_index(args.h_index)
        if (index.n_rows, index.n_cols) != gt.shape:
            raise ValidationError("road index grid size does not match the built-up grid")
    else:
        index = build_road_index(roads, gt)
    fragments = extract_fragments(
        index, roads, gt, radius=args.radius, max_points=args.max_len, workers=args.workers
    )
    write_fragments(fragments, os.path.join(out, "fragments.txt"))
    inputs = {"roads": args.roads, "grid_t0": args.grid_t0}
    if args.h_index:
        inputs["h_index"] = args.h_index
    _write_manifest(
        out, "pbr",
        {"radius": args.radius, "max_len": args.max_len, "decimals": args.decimals},
        inputs, ["fragments.txt"],
    )
    log.info("%d cells carry fragments", len(fragments))
    return 0


def _cmd_train_road(args) -> int:
    out = _outdir(args)
    run = RunConfig(
        rep_size=args.rep_size, radius=args.radius, epochs=args.epochs,
        learning_rate=args.lr, batch_size=args.batch, seed=args.seed,
    )
    fragments = read_fragments(args.pbr)
    gt = _load_grid_transform(args.grid_t0)
    enc = new_road_encoder(
        run.rep_size // 2,
        AxisNormalizer.from_transform(gt),
        seed=run.seed,
        max_len=args.max_len,
        split_streams=args.split_streams,
    )
    history, _ = train_road_encoder(
        enc, fragments,
        SGDConfig(run.learning_rate, run.batch_size, run.epochs, run.seed),
    )
    save_road_encoder(os.path.join(out, "road_encoder.ckpt"), enc)
    with open(os.path.join(out, "road_loss.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,lat_loss,lon_loss\n")
        for i, (la, lo) in enumerate(zip(history["lat"], history["lon"]), start=1):
            fh.write(f"{i},{la:.12g},{lo:.12g}\n")
    _write_manifest(
        out, "train-road",
        {"rep_size": run.rep_size, "epochs": run.epochs, "lr": run.learning_rate,
         "batch": run.batch_size, "seed": run.seed, "max_len": args.max_len,
         "split_streams": args.split_streams},
        {"pbr": args.pbr, "grid_t0": args.grid_t0},
        ["road_encoder.ckpt", "road_loss.csv"],
    )
    return 0


def _cmd_encode_road(args) -> int:
    out = _outdir(args)
    fragments = read_fragments(args.pbr)
    enc = load_road_encoder(args.ckpt)
    gt = _load_grid_transform(args.grid_t0)
    codes = encode_cells(enc, fragments, gt.n_rows, gt.n_cols)
    write_cell_vectors(codes, os.path.join(out, "road_codes.csv"))
    _write_manifest(
        out, "encode-road", {},
        {"pbr": args.pbr, "ckpt": args.ckpt, "grid_t0": args.grid_t0},
        ["road_codes.csv"],
    )
    return 0


def _load_raster_for_mode(args) -> RasterGrid:
    raster = read_raster_manifest(args.raster_manifest)
    if args.mode == "baseline-raster":
        if not args.roads:
            raise ConfigError("baseline-raster mode needs --roads")
        raster = baseline_rasterize(load_roads(args.roads, decimals=args.decimals), raster)
    return raster


def _cmd_train_raster(args) -> int:
    out = _outdir(args)
    raster = _load_raster_for_mode(args)
    bands = normalize_bands(raster)
    patches = extract_all_patches(bands, args.radius)
    ae = new_patch_autoencoder(patches.shape[1], args.raster_len, np.random.default_rng(args.seed))
    history = train_patch_autoencoder(
        ae, patches, SGDConfig(args.lr, args.batch, args.epochs, args.seed)
    )
    save_patch_autoencoder(os.path.join(out, "raster_encoder.ckpt"), ae, args.radius, len(raster.bands))
    with open(os.path.join(out, "raster_loss.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(history, start=1):
            fh.write(f"{i},{v:.12g}\n")
    inputs = {"raster_manifest": args.raster_manifest}
    if args.roads:
        inputs["roads"] = args.roads
    _write_manifest(
        out, "train-raster",
        {"raster_len": args.raster_len, "radius": args.radius, "epochs": args.epochs,
         "lr": args.lr, "batch": args.batch, "seed": args.seed, "mode": args.mode},
        inputs, ["raster_encoder.ckpt", "raster_loss.csv"],
    )
    return 0


def _cmd_encode_raster(args) -> int:
    out = _outdir(args)
    raster = _load_raster_for_mode(args)
    ae, radius, n_bands = load_patch_autoencoder(args.ckpt)
    if n_bands != len(raster.bands):
        raise ValidationError(
            f"checkpoint was trained on {n_bands} band(s), raster has {len(raster.bands)}"
        )
    codes = encode_raster(ae, normalize_bands(raster), radius)
    write_cell_vectors(codes, os.path.join(out, "raster_codes.csv"))
    inputs = {"raster_manifest": args.raster_manifest, "ckpt": args.ckpt}
    if args.roads:
        inputs["roads"] = args.roads
    _write_manifest(out, "encode-raster", {"mode": args.mode}, inputs, ["raster_codes.csv"])
    return 0


def _load_codes_for_mode(args):
    raster_codes = read_cell_vectors(args.raster_reps)
    road_codes = None
    if args.mode == "roads-repr":
        if not args.road_reps:
            raise ConfigError("roads-repr mode needs --road-reps")
        road_codes = read_cell_vectors(args.road_reps)
        if road_codes.shape[:2] != raster_codes.shape[:2]:
            raise ValidationError("road and raster code grids disagree in size")
    return raster_codes, road_codes


def _cmd_fit(args) -> int:
    out = _outdir(args)
    b0 = read_builtup(args.grid_t0)
    b1 = read_builtup(args.grid_t1)
    raster_codes, road_codes = _load_codes_for_mode(args)
    layout = feature_layout(
        args.radius, raster_codes.shape[2], 0 if road_codes is None else road_codes.shape[2]
    )
    X = growth.build_feature_matrix(b0.cells, raster_codes, road_codes, args.radius)
    X, y = growth.extract_training_set(b0, b1, X)
    cfg = TreeConfig(max_depth=args.max_depth, min_samples_leaf=args.min_leaf)
    if args.trees > 1:
        model = growth.fit_forest(X, y, args.trees, cfg, args.seed, layout)
    else:
        model = growth.fit_tree(X, y, cfg, layout)
    growth.save_model(os.path.join(out, "model.txt"), model, extras={"mode": args.mode})
    inputs = {"grid_t0": args.grid_t0, "grid_t1": args.grid_t1, "raster_reps": args.raster_reps}
    if args.road_reps:
        inputs["road_reps"] = args.road_reps
    _write_manifest(
        out, "fit",
        {"mode": args.mode, "radius": args.radius, "max_depth": args.max_depth,
         "min_leaf": args.min_leaf, "trees": args.trees, "seed": args.seed},
        inputs, ["model.txt"],
    )
    return 0


def _cmd_simulate(args) -> int:
    out = _outdir(args)
    start = read_builtup(args.grid)
    model, extras = growth.load_model(args.model)
    if extras.get("mode") and extras["mode"] != args.mode:
        raise ValidationError(
            f"model was fitted in mode {extras['mode']!r}, got --mode {args.mode!r}"
        )
    raster_codes, road_codes = _load_codes_for_mode(args)
    pred, tau = growth.simulate_step(start, model, raster_codes, road_codes, args.radius)
    write_grid(pred, os.path.join(out, "predicted.asc"))
    write_grid(RasterGrid(start.transform, [tau.astype(float)]), os.path.join(out, "transitions.asc"))
    inputs = {"grid": args.grid, "model": args.model, "raster_reps": args.raster_reps}
    if args.road_reps:
        inputs["road_reps"] = args.road_reps
    _write_manifest(
        out, "simulate", {"mode": args.mode, "radius": args.radius},
        inputs, ["predicted.asc", "transitions.asc"],
    )
    return 0


def _cmd_evaluate(args) -> int:
    out = _outdir(args)
    b0 = read_builtup(args.grid_t0)
    obs = read_builtup(args.grid_obs)
    pred = read_builtup(args.grid_pred)
    areas = metrics.compute_areas(b0, obs, pred)
    values = metrics.metric_values(areas)
    row = {
        "scenario": args.scenario,
        "rep_size": args.rep_size if args.rep_size is not None else "-",
        "epoch": args.epoch if args.epoch is not None else "-",
        "method": args.method,
        **values,
    }
    _write_metrics_csv(os.path.join(out, "metrics.csv"), [row])
    cats = metrics.area_categories(b0, obs, pred)
    write_ppm(cats, metrics.ERROR_MAP_PALETTE, os.path.join(out, "error_map.ppm"))
    _write_manifest(
        out, "evaluate",
        {"scenario": args.scenario, "method": args.method,
         "areas": f"A={areas.a} B={areas.b} C={areas.c} D={areas.d} E={areas.e}"},
        {"grid_t0": args.grid_t0, "grid_obs": args.grid_obs, "grid_pred": args.grid_pred},
        ["metrics.csv", "error_map.ppm"],
    )
    for name, value in values.items():
        print(f"{name} {metrics.format_metric(value)}")
    return 0


def _cmd_sweep(args) -> int:
    out = _outdir(args)
    inputs = pipeline.StudyInputs(
        roads=load_roads(args.roads, decimals=args.decimals),
        transform=_load_grid_transform(args.grid_t0),
        builtup_t0=read_builtup(args.grid_t0),
        builtup_t1=read_builtup(args.grid_t1),
        builtup_t2=read_builtup(args.grid_t2),
        raster=read_raster_manifest(args.raster_manifest),
    )
    rep_sizes = [int(s) for s in args.rep_sizes.split(",") if s]
    modes = [m for m in args.modes.split(",") if m]
    epochs = [int(e) for e in args.epochs_list.split(",") if e]
    cfg = pipeline.StudyConfig(
        radius=args.radius,
        raster_len=args.raster_len,
        raster_epochs=args.raster_epochs,
        road_epochs=max(epochs),
        learning_rate=args.lr,
        batch_size=args.batch,
        seed=args.seed,
        tree=TreeConfig(max_depth=args.max_depth, min_samples_leaf=args.min_leaf),
    )
    rows, maps = pipeline.run_study(inputs, modes, rep_sizes, epochs, cfg, scenario_label=args.scenario)
    _write_metrics_csv(os.path.join(out, "metrics.csv"), rows)
    outputs = ["metrics.csv"]
    for (rep_size, epoch, mode), cats in maps.items():
        name = f"error_{mode}_rep{rep_size}_ep{epoch}.ppm"
        write_ppm(cats, metrics.ERROR_MAP_PALETTE, os.path.join(out, name))
        outputs.append(name)
    _write_manifest(
        out, "sweep",
        {"rep_sizes": args.rep_sizes, "modes": args.modes, "epochs_list": args.epochs_list,
         "radius": args.radius, "raster_len": args.raster_len, "raster_epochs": args.raster_epochs,
         "lr": args.lr, "batch": args.batch, "seed": args.seed,
         "max_depth": args.max_depth, "min_leaf": args.min_leaf},
        {"roads": args.roads, "grid_t0": args.grid_t0, "grid_t1": args.grid_t1,
         "grid_t2": args.grid_t2, "raster_manifest": args.raster_manifest},
        outputs,
    )
    log.info("sweep wrote %d rows", len(rows))
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _int_or_none(text: str):
    return None if text in ("", "none", "None") else int(text)


def _add_common_training_flags(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int, default=20, help="training epochs")
    p.add_argument("--lr", type=float, default=0.1, help="learning rate")
    p.add_argument("--batch", type=int, default=64, help="mini-batch size")
    p.add_argument("--seed", type=int, default=0, help="random seed")


def _add_mode_flags(p: argparse.ArgumentParser):
    p.add_argument("--mode", choices=pipeline.MODES, default="no-roads")
    p.add_argument("--roads", default=None, help="road GeoJSON (baseline-raster mode)")
    p.add_argument("--decimals", type=_int_or_none, default=None,
                   help="quantize road coordinates to this many decimals at ingestion")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadgrowth",
        description="Urban growth simulation with learned road-network representations.",
    )
    parser.add_argument("--config", default=None, help="key=value config file; flags override")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--n-roads", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-near", type=float, default=0.65)
    p.add_argument("--p-far", type=float, default=0.02)
    p.add_argument("--d-road", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("index", help="build the per-cell road id index")
    p.add_argument("--roads", required=True)
    p.add_argument("--grid-t0", required=True, help="built-up grid supplying the transform")
    p.add_argument("--clip-roads", action="store_true", help="clip roads leaving the extent instead of erroring")
    p.add_argument("--decimals", type=_int_or_none, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("pbr", help="extract per-cell road fragment sequences")
    p.add_argument("--roads", required=True)
    p.add_argument("--grid-t0", required=True)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--max-len", type=int, default=18)
    p.add_argument("--h-index", default=None, help="reuse a road_index.txt artifact")
    p.add_argument("--decimals", type=_int_or_none, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pbr)

    p = sub.add_parser("train-road", help="train the road sequence autoencoders")
    p.add_argument("--pbr", required=True, help="fragments.txt from the pbr stage")
    p.add_argument("--grid-t0", required=True)
    p.add_argument("--rep-size", type=int, default=6, help="code length (2x hidden units)")
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--max-len", type=int, default=18)
    p.add_argument("--split-streams", action="store_true",
                   help="train independent per-unit recurrences instead of one dense cell")
    _add_common_training_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_road)

    p = sub.add_parser("encode-road", help="encode fragments into per-cell road codes")
    p.add_argument("--pbr", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--grid-t0", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode_road)

    p = sub.add_parser("train-raster", help="train the raster patch autoencoder")
    p.add_argument("--raster-manifest", required=True)
    p.add_argument("--raster-len", type=int, default=8)
    p.add_argument("--radius", type=int, default=1)
    _add_mode_flags(p)
    _add_common_training_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_raster)

    p = sub.add_parser("encode-raster", help="encode raster patches into per-cell codes")
    p.add_argument("--raster-manifest", required=True)
    p.add_argument("--ckpt", required=True)
    _add_mode_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode_raster)

    p = sub.add_parser("fit", help="fit the transition classifier")
    p.add_argument("--grid-t0", required=True)
    p.add_argument("--grid-t1", required=True)
    p.add_argument("--raster-reps", required=True)
    p.add_argument("--road-reps", default=None)
    p.add_argument("--mode", choices=pipeline.MODES, default="no-roads")
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--max-depth", type=_int_or_none, default=10)
    p.add_argument("--min-leaf", type=int, default=4)
    p.add_argument("--trees", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("simulate", help="run one synchronous growth step")
    p.add_argument("--grid", required=True, help="built-up grid to start from")
    p.add_argument("--model", required=True)
    p.add_argument("--raster-reps", required=True)
    p.add_argument("--road-reps", default=None)
    p.add_argument("--mode", choices=pipeline.MODES, default="no-roads")
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="score a predicted grid against observations")
    p.add_argument("--grid-t0", required=True, help="observed start grid")
    p.add_argument("--grid-obs", required=True, help="observed end grid")
    p.add_argument("--grid-pred", required=True, help="predicted end grid")
    p.add_argument("--scenario", default="-")
    p.add_argument("--method", default="-")
    p.add_argument("--rep-size", type=int, default=None)
    p.add_argument("--epoch", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="cross rep sizes, epochs and modes into one metrics table")
    p.add_argument("--roads", required=True)
    p.add_argument("--grid-t0", required=True)
    p.add_argument("--grid-t1", required=True)
    p.add_argument("--grid-t2", required=True)
    p.add_argument("--raster-manifest", required=True)
    p.add_argument("--rep-sizes", default="2,6,10")
    p.add_argument("--modes", default=",".join(pipeline.MODES))
    p.add_argument("--epochs-list", default="5,15", help="road-encoder epoch checkpoints")
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--raster-len", type=int, default=8)
    p.add_argument("--raster-epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=_int_or_none, default=10)
    p.add_argument("--min-leaf", type=int, default=4)
    p.add_argument("--scenario", default="synthetic")
    p.add_argument("--decimals", type=_int_or_none, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    return parser


def _load_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line {ln}: expected key=value")
            key, _, value = line.partition("=")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Turn config-file entries into subparser defaults; flags still override."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    config = _load_config_file(known.config)
    for action in parser._subparsers._group_actions:  # noqa: SLF001 - argparse has no public hook
        for sub in action.choices.values():
            defaults = {}
            for sub_action in sub._actions:  # noqa: SLF001
                if sub_action.dest in config:
                    raw = config[sub_action.dest]
                    if isinstance(sub_action, argparse._StoreTrueAction):  # noqa: SLF001
                        defaults[sub_action.dest] = raw.lower() in ("1", "true", "yes")
                    elif sub_action.type is not None:
                        defaults[sub_action.dest] = sub_action.type(raw)
                    else:
                        defaults[sub_action.dest] = raw
            if defaults:
                sub.set_defaults(**defaults)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args) or 0
    except PipelineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
