"""Readers and writers for every on-disk artifact: GeoJSON road networks,
ASCII grids, fragment sequences, per-cell code vectors, and PGM/PPM images.

All text formats round-trip at 12 significant digits and all readers reject
trailing garbage, reporting 1-based line numbers in errors.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ParseError, ValidationError
from .geometry import GeoTransform, Polyline

__all__ = [
    "Road",
    "RoadNetwork",
    "RasterGrid",
    "BuiltupGrid",
    "parse_roads",
    "load_roads",
    "write_roads",
    "read_grid",
    "read_builtup",
    "write_grid",
    "read_raster_manifest",
    "write_raster_manifest",
    "write_pgm",
    "write_ppm",
    "read_fragments",
    "write_fragments",
    "read_cell_vectors",
    "write_cell_vectors",
]

_FLOAT_FMT = ".12g"
DEFAULT_NODATA = -9999.0


def _fmt(v: float) -> str:
    return format(float(v), _FLOAT_FMT)


# ---------------------------------------------------------------------------
# road networks (GeoJSON LineString subset)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Road:
    road_id: int
    geometry: Polyline


@dataclass
class RoadNetwork:
    roads: list[Road]

    def __post_init__(self):
        ids = [r.road_id for r in self.roads]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate road ids in network")

    def __len__(self) -> int:
        return len(self.roads)

    def geometries_by_id(self) -> dict[int, Polyline]:
        return {r.road_id: r.geometry for r in self.roads}


def parse_roads(src, decimals: int | None = None) -> RoadNetwork:
    """Parse a GeoJSON FeatureCollection of LineStrings into a road network.

    Only LineString geometries are supported. Road ids come from a feature
    property ``id`` when present, otherwise from file order. Consecutive
    duplicate points are dropped; ``decimals`` optionally quantizes
    coordinates to that many decimal places before deduplication.
    """
    text = src if isinstance(src, str) else src.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError("expected a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise ParseError("FeatureCollection has no feature list")

    roads = []
    for i, feat in enumerate(features):
        if not isinstance(feat, dict):
            raise ParseError(f"feature {i}: not an object")
        geom = feat.get("geometry")
        if not isinstance(geom, dict) or geom.get("type") != "LineString":
            kind = geom.get("type") if isinstance(geom, dict) else geom
            raise ParseError(f"feature {i}: only LineString geometries are supported, got {kind!r}")
        raw = geom.get("coordinates")
        if not isinstance(raw, list):
            raise ParseError(f"feature {i}: missing coordinates")
        pts: list[tuple[float, float]] = []
        for pos in raw:
            if not isinstance(pos, (list, tuple)) or len(pos) < 2:
                raise ParseError(f"feature {i}: malformed coordinate {pos!r}")
            try:
                x, y = float(pos[0]), float(pos[1])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"feature {i}: non-numeric coordinate {pos!r}") from exc
            if decimals is not None:
                x, y = round(x, decimals), round(y, decimals)
            if not pts or (x, y) != pts[-1]:
                pts.append((x, y))
        if len(pts) < 2:
            raise ValidationError(f"feature {i}: LineString needs at least 2 distinct points")
        props = feat.get("properties") or {}
        rid = props.get("id", i)
        try:
            rid = int(rid)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"feature {i}: non-integer id {rid!r}") from exc
        roads.append(Road(rid, Polyline(pts)))
    return RoadNetwork(roads)


def load_roads(path, decimals: int | None = None) -> RoadNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_roads(fh, decimals=decimals)


def write_roads(net: RoadNetwork, path) -> None:
    features = []
    for road in net.roads:
        features.append(
            {
                "type": "Feature",
                "properties": {"id": road.road_id},
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[float(x), float(y)] for x, y in road.geometry.points],
                },
            }
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh)
        fh.write("\n")


# ---------------------------------------------------------------------------
# grids (ESRI ASCII)
# ---------------------------------------------------------------------------

@dataclass
class RasterGrid:
    """Multi-band grid of real values sharing one transform."""

    transform: GeoTransform
    bands: list[np.ndarray]
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        if not self.bands:
            raise ValidationError("raster needs at least one band")
        shape = self.transform.shape
        for i, band in enumerate(self.bands):
            if band.shape != shape:
                raise DimensionMismatchError(
                    f"band {i} shape {band.shape} does not match grid {shape}"
                )


@dataclass
class BuiltupGrid:
    """Binary built-up states; nodata cells carried in an optional mask."""

    transform: GeoTransform
    cells: np.ndarray
    nodata_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.cells.shape != self.transform.shape:
            raise DimensionMismatchError(
                f"cells shape {self.cells.shape} does not match grid {self.transform.shape}"
            )
        vals = np.unique(self.cells)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError(f"built-up grid must be binary, found values {vals[:5]}")
        if self.nodata_mask is not None and self.nodata_mask.shape != self.cells.shape:
            raise DimensionMismatchError("nodata mask shape mismatch")


_ASC_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def _read_asc(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header: dict[str, float] = {}
    if len(lines) < 6:
        raise ParseError(f"line {len(lines) + 1}: truncated header")
    for ln in range(6):
        parts = lines[ln].split()
        if len(parts) != 2:
            raise ParseError(f"line {ln + 1}: expected 'key value' header entry")
        key = parts[0].lower()
        if key not in _ASC_KEYS:
            raise ParseError(f"line {ln + 1}: unknown header key {parts[0]!r}")
        if key in header:
            raise ParseError(f"line {ln + 1}: duplicate header key {parts[0]!r}")
        try:
            header[key] = float(parts[1])
        except ValueError as exc:
            raise ParseError(f"line {ln + 1}: non-numeric header value {parts[1]!r}") from exc
    missing = [k for k in _ASC_KEYS if k not in header]
    if missing:
        raise ParseError(f"line 6: missing header keys {missing}")

    n_cols = int(header["ncols"])
    n_rows = int(header["nrows"])
    cellsize = header["cellsize"]
    if n_cols < 1 or n_rows < 1 or cellsize <= 0:
        raise ParseError("line 6: non-positive grid dimensions")
    gt = GeoTransform(
        origin_x=header["xllcorner"],
        origin_y=header["yllcorner"] + n_rows * cellsize,
        pixel_w=cellsize,
        pixel_h=cellsize,
        n_rows=n_rows,
        n_cols=n_cols,
    )
    values = np.empty((n_rows, n_cols), dtype=float)
    for r in range(n_rows):
        ln = 6 + r
        if ln >= len(lines):
            raise ParseError(f"line {ln + 1}: expected {n_rows} data rows, file ends early")
        tokens = lines[ln].split()
        if len(tokens) != n_cols:
            raise ParseError(f"line {ln + 1}: expected {n_cols} values, got {len(tokens)}")
        try:
            values[r] = [float(t) for t in tokens]
        except ValueError as exc:
            raise ParseError(f"line {ln + 1}: non-numeric value") from exc
    for extra in range(6 + n_rows, len(lines)):
        if lines[extra].strip():
            raise ParseError(f"line {extra + 1}: trailing content after data rows")
    return gt, values, header["nodata_value"]


def read_grid(path) -> RasterGrid:
    """Read one ASCII grid file as a single-band raster."""
    gt, values, nodata = _read_asc(path)
    return RasterGrid(gt, [values], nodata)


def read_builtup(path) -> BuiltupGrid:
    """Read an ASCII grid whose values must be 0, 1 or nodata."""
    gt, values, nodata = _read_asc(path)
    mask = values == nodata
    bad = ~mask & (values != 0.0) & (values != 1.0)
    if np.any(bad):
        r, c = np.argwhere(bad)[0]
        raise ValueError(
            f"line {7 + int(r)}: non-binary built-up value {values[r, c]!r}"
        )
    cells = np.where(mask, 0, values).astype(np.uint8)
    return BuiltupGrid(gt, cells, mask if mask.any() else None)


def _write_asc(path, gt: GeoTransform, values: np.ndarray, nodata: float) -> None:
    if gt.pixel_w != gt.pixel_h:
        raise ValueError("ASCII grids require square cells")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"ncols {gt.n_cols}\n")
        fh.write(f"nrows {gt.n_rows}\n")
        fh.write(f"xllcorner {_fmt(gt.origin_x)}\n")
        fh.write(f"yllcorner {_fmt(gt.origin_y - gt.n_rows * gt.pixel_h)}\n")
        fh.write(f"cellsize {_fmt(gt.pixel_w)}\n")
        fh.write(f"NODATA_value {_fmt(nodata)}\n")
        for row in values:
            fh.write(" ".join(_fmt(v) for v in row))
            fh.write("\n")


def write_grid(grid, path) -> None:
    """Write a single-band raster or a built-up grid to an ASCII grid file."""
    if isinstance(grid, BuiltupGrid):
        values = grid.cells.astype(float)
        if grid.nodata_mask is not None:
            values = np.where(grid.nodata_mask, DEFAULT_NODATA, values)
        _write_asc(path, grid.transform, values, DEFAULT_NODATA)
        return
    if len(grid.bands) != 1:
        raise ValueError("write_grid handles one band; use write_raster_manifest")
    _write_asc(path, grid.transform, grid.bands[0], grid.nodata)


def read_raster_manifest(path) -> RasterGrid:
    """Read a multi-band raster via a manifest listing one band file per line."""
    base = os.path.dirname(os.fspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        names = [ln.strip() for ln in fh if ln.strip()]
    if not names:
        raise ParseError("line 1: empty raster manifest")
    bands = []
    gt = None
    nodata = DEFAULT_NODATA
    for name in names:
        g, values, nd = _read_asc(os.path.join(base, name))
        if gt is None:
            gt, nodata = g, nd
        elif g != gt:
            raise DimensionMismatchError(f"band file {name!r} disagrees with first band")
        bands.append(values)
    return RasterGrid(gt, bands, nodata)


def write_raster_manifest(raster: RasterGrid, directory, basename: str = "raster") -> str:
    """Write each band as its own ASCII grid plus a manifest; returns its path."""
    names = []
    for i, band in enumerate(raster.bands):
        name = f"{basename}_b{i + 1}.asc"
        _write_asc(os.path.join(directory, name), raster.transform, band, raster.nodata)
        names.append(name)
    manifest = os.path.join(directory, f"{basename}.manifest")
    with open(manifest, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(names) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def write_pgm(values, path) -> None:
    """Write a binary PGM (P5), min-max scaled to 0..255.

    A constant-valued grid maps to uniform 0.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValidationError("PGM input must be 2-D")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("PGM input has non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        scaled = np.rint((arr - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(arr)
    data = scaled.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def write_ppm(categories, palette: dict[int, tuple[int, int, int]], path) -> None:
    """Write a binary PPM (P6) from an integer category map and a palette."""
    cats = np.asarray(categories)
    if cats.ndim != 2:
        raise ValidationError("PPM input must be 2-D")
    present = np.unique(cats)
    unknown = [int(v) for v in present if int(v) not in palette]
    if unknown:
        raise ValidationError(f"categories {unknown} missing from palette")
    lut = np.zeros((int(present.max()) + 1, 3), dtype=np.uint8)
    for cat, rgb in palette.items():
        if 0 <= cat < lut.shape[0]:
            lut[cat] = rgb
    rgb = lut[cats.astype(int)]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{cats.shape[1]} {cats.shape[0]}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


# ---------------------------------------------------------------------------
# per-cell fragment sequences
# ---------------------------------------------------------------------------

def write_fragments(fragments: dict[tuple[int, int], list[np.ndarray]], path) -> None:
    """Write per-cell coordinate sequences, one sequence per line.

    Line format: ``row col n x1 y1 ... xn yn``.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (row, col) in sorted(fragments):
            for seq in fragments[(row, col)]:
                pts = np.asarray(seq, dtype=float)
                fields = [str(row), str(col), str(pts.shape[0])]
                for x, y in pts:
                    fields.append(_fmt(x))
                    fields.append(_fmt(y))
                fh.write(" ".join(fields))
                fh.write("\n")


def read_fragments(path) -> dict[tuple[int, int], list[np.ndarray]]:
    out: dict[tuple[int, int], list[np.ndarray]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            tokens = line.split()
            if len(tokens) < 3:
                raise ParseError(f"line {ln}: expected 'row col n ...'")
            try:
                row, col, n = int(tokens[0]), int(tokens[1]), int(tokens[2])
            except ValueError as exc:
                raise ParseError(f"line {ln}: non-integer header fields") from exc
            if n < 1:
                raise ParseError(f"line {ln}: sequence length must be >= 1")
            if len(tokens) != 3 + 2 * n:
                raise ParseError(
                    f"line {ln}: expected {3 + 2 * n} fields for n={n}, got {len(tokens)}"
                )
            try:
                coords = np.array([float(t) for t in tokens[3:]], dtype=float)
            except ValueError as exc:
                raise ParseError(f"line {ln}: non-numeric coordinate") from exc
            if not np.all(np.isfinite(coords)):
                raise ParseError(f"line {ln}: non-finite coordinate")
            out.setdefault((row, col), []).append(coords.reshape(n, 2))
    return out


# ---------------------------------------------------------------------------
# per-cell code vectors (CSV)
# ---------------------------------------------------------------------------

def write_cell_vectors(vectors: np.ndarray, path) -> None:
    """Write an (n_rows, n_cols, length) array as CSV rows ``row,col,v1..``."""
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim != 3:
        raise ValidationError("cell vectors must be (rows, cols, length)")
    n_rows, n_cols, length = arr.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("row,col," + ",".join(f"v{i + 1}" for i in range(length)) + "\n")
        for r in range(n_rows):
            for c in range(n_cols):
                fh.write(f"{r},{c}," + ",".join(_fmt(v) for v in arr[r, c]) + "\n")


def read_cell_vectors(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("line 1: empty cell vector file")
    header = lines[0].split(",")
    if header[:2] != ["row", "col"] or len(header) < 3:
        raise ParseError("line 1: expected header 'row,col,v1,...'")
    length = len(header) - 2
    records: dict[tuple[int, int], np.ndarray] = {}
    max_r = max_c = -1
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 2 + length:
            raise ParseError(f"line {ln}: expected {2 + length} fields, got {len(fields)}")
        try:
            r, c = int(fields[0]), int(fields[1])
            vals = np.array([float(v) for v in fields[2:]], dtype=float)
        except ValueError as exc:
            raise ParseError(f"line {ln}: malformed record") from exc
        if (r, c) in records:
            raise ParseError(f"line {ln}: duplicate cell ({r}, {c})")
        records[(r, c)] = vals
        max_r, max_c = max(max_r, r), max(max_c, c)
    if max_r < 0:
        raise ParseError("line 2: no records")
    n_rows, n_cols = max_r + 1, max_c + 1
    if len(records) != n_rows * n_cols:
        raise ParseError(f"line {len(lines)}: incomplete grid coverage")
    out = np.zeros((n_rows, n_cols, length), dtype=float)
    for (r, c), vals in records.items():
        out[r, c] = vals
    return out
