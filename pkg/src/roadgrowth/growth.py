"""Cellular-automaton growth model: feature assembly, CART decision tree
(and bagged forests) for the transition function, synchronous one-step
simulation, and the rasterized-road baseline band.

Cell features are assembled in a fixed order: the cell's own built-up state,
its Moore-neighborhood states row-major (zero-filled at borders), the raster
code, then the road code (omitted in modes without one). A layout hash is
stored with every trained model and checked again at prediction time.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyDatasetError,
    ParseError,
    ValidationError,
)
from .formats import BuiltupGrid, RasterGrid, RoadNetwork
from .road_index import build_road_index

__all__ = [
    "TransitionLabel",
    "TreeConfig",
    "DecisionTree",
    "DecisionForest",
    "transition_labels",
    "feature_layout",
    "layout_hash",
    "assemble_features",
    "build_feature_matrix",
    "extract_training_set",
    "fit_tree",
    "fit_forest",
    "simulate_step",
    "road_presence_band",
    "baseline_rasterize",
    "save_model",
    "load_model",
]


class TransitionLabel(IntEnum):
    NB_NB = 0
    B_B = 1
    NB_B = 2
    B_NB = 3


_BUILT_LABELS = (TransitionLabel.B_B, TransitionLabel.NB_B)
_N_LABELS = 4


def transition_labels(l_t0: np.ndarray, l_t1: np.ndarray) -> np.ndarray:
    """Per-cell transition label from a pair of binary state arrays."""
    l0 = np.asarray(l_t0)
    l1 = np.asarray(l_t1)
    if l0.shape != l1.shape:
        raise DimensionMismatchError(f"state grids differ: {l0.shape} vs {l1.shape}")
    return np.where(
        l0 == 0,
        np.where(l1 == 0, TransitionLabel.NB_NB, TransitionLabel.NB_B),
        np.where(l1 == 1, TransitionLabel.B_B, TransitionLabel.B_NB),
    ).astype(np.int64)


# ---------------------------------------------------------------------------
# feature assembly
# ---------------------------------------------------------------------------

def feature_layout(radius: int, raster_len: int, road_len: int) -> str:
    n_neighbors = (2 * radius + 1) ** 2 - 1
    return f"cells-v1 radius={radius} self=1 neighbors={n_neighbors} raster={raster_len} road={road_len}"


def layout_hash(layout: str) -> str:
    return hashlib.sha256(layout.encode("utf-8")).hexdigest()[:16]


def _check_grids(builtup: np.ndarray, raster_codes: np.ndarray, road_codes: np.ndarray | None):
    if builtup.ndim != 2:
        raise DimensionMismatchError("built-up states must be 2-D")
    if raster_codes.ndim != 3 or raster_codes.shape[:2] != builtup.shape:
        raise DimensionMismatchError("raster codes must be (rows, cols, len) matching the grid")
    if road_codes is not None and (road_codes.ndim != 3 or road_codes.shape[:2] != builtup.shape):
        raise DimensionMismatchError("road codes must be (rows, cols, len) matching the grid")


def assemble_features(
    row: int,
    col: int,
    builtup: np.ndarray,
    raster_codes: np.ndarray,
    road_codes: np.ndarray | None,
    radius: int = 1,
) -> np.ndarray:
    """Feature vector for one cell."""
    _check_grids(builtup, raster_codes, road_codes)
    n_rows, n_cols = builtup.shape
    parts = [float(builtup[row, col])]
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr == 0 and dc == 0:
                continue
            r, c = row + dr, col + dc
            parts.append(float(builtup[r, c]) if 0 <= r < n_rows and 0 <= c < n_cols else 0.0)
    vec = np.concatenate([np.array(parts), raster_codes[row, col]])
    if road_codes is not None:
        vec = np.concatenate([vec, road_codes[row, col]])
    return vec


def build_feature_matrix(
    builtup: np.ndarray,
    raster_codes: np.ndarray,
    road_codes: np.ndarray | None,
    radius: int = 1,
) -> np.ndarray:
    """Feature vectors for every cell, one row per cell in row-major order."""
    _check_grids(builtup, raster_codes, road_codes)
    n_rows, n_cols = builtup.shape
    size = 2 * radius + 1
    padded = np.zeros((n_rows + 2 * radius, n_cols + 2 * radius))
    padded[radius : radius + n_rows, radius : radius + n_cols] = builtup
    cols = [builtup.astype(float).reshape(-1, 1)]
    for dr in range(size):
        for dc in range(size):
            if dr == radius and dc == radius:
                continue
            cols.append(padded[dr : dr + n_rows, dc : dc + n_cols].reshape(-1, 1))
    cols.append(raster_codes.reshape(n_rows * n_cols, -1))
    if road_codes is not None:
        cols.append(road_codes.reshape(n_rows * n_cols, -1))
    return np.concatenate(cols, axis=1)


def extract_training_set(builtup_t0, builtup_t1, features: np.ndarray):
    """One training row per cell with the observed transition as its label."""
    b0 = builtup_t0.cells if isinstance(builtup_t0, BuiltupGrid) else np.asarray(builtup_t0)
    b1 = builtup_t1.cells if isinstance(builtup_t1, BuiltupGrid) else np.asarray(builtup_t1)
    if b0.shape != b1.shape:
        raise DimensionMismatchError(f"state grids differ: {b0.shape} vs {b1.shape}")
    if features.shape[0] != b0.size:
        raise DimensionMismatchError(
            f"feature rows {features.shape[0]} != cell count {b0.size}"
        )
    y = transition_labels(b0.ravel(), b1.ravel())
    return features, y


# ---------------------------------------------------------------------------
# CART decision tree
# ---------------------------------------------------------------------------

@dataclass
class TreeConfig:
    max_depth: int | None = None
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")


@dataclass
class TreeNode:
    feature: int            # -1 at leaves
    threshold: float
    counts: np.ndarray      # per-label sample counts reaching this node
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


def _gini(counts: np.ndarray, n: int) -> float:
    p = counts / n
    return 1.0 - float((p * p).sum())


def _best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray, min_leaf: int):
    """Greedy Gini-minimizing split; ties resolved to the lowest feature
    index, then the lowest threshold. Returns (feature, threshold) or None."""
    n = idx.size
    parent_counts = np.bincount(y[idx], minlength=_N_LABELS).astype(float)
    parent_gini = _gini(parent_counts, n)
    best_gain = 0.0
    best = None
    for f in range(X.shape[1]):
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        if sv[0] == sv[-1]:
            continue
        sy = y[idx][order]
        onehot = np.zeros((n, _N_LABELS))
        onehot[np.arange(n), sy] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]          # counts for left sizes 1..n-1
        right = parent_counts - left
        nl = np.arange(1, n, dtype=float)
        nr = n - nl
        gini_l = 1.0 - (left * left).sum(axis=1) / (nl * nl)
        gini_r = 1.0 - (right * right).sum(axis=1) / (nr * nr)
        gain = parent_gini - (nl * gini_l + nr * gini_r) / n
        valid = sv[:-1] < sv[1:]
        if min_leaf > 1:
            valid &= (nl >= min_leaf) & (nr >= min_leaf)
        gain = np.where(valid, gain, -np.inf)
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            best_gain = float(gain[j])
            best = (f, 0.5 * (sv[j] + sv[j + 1]))
    return best


@dataclass
class DecisionTree:
    root: TreeNode
    n_features: int
    config: TreeConfig
    layout: str | None = None

    def predict(self, x: np.ndarray) -> int:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features,):
            raise DimensionMismatchError(
                f"feature length {x.shape} != trained {self.n_features}"
            )
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return int(np.argmax(node.counts))

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                f"feature matrix {X.shape} != trained width {self.n_features}"
            )
        out = np.empty(X.shape[0], dtype=np.int64)
        for i in range(X.shape[0]):
            node = self.root
            while not node.is_leaf:
                node = node.left if X[i, node.feature] <= node.threshold else node.right
            out[i] = int(np.argmax(node.counts))
        return out


def _build(X, y, idx, depth, cfg: TreeConfig) -> TreeNode:
    counts = np.bincount(y[idx], minlength=_N_LABELS).astype(float)
    pure = np.count_nonzero(counts) <= 1
    depth_capped = cfg.max_depth is not None and depth >= cfg.max_depth
    if pure or depth_capped or idx.size < 2 * cfg.min_samples_leaf or idx.size < 2:
        return TreeNode(-1, 0.0, counts)
    split = _best_split(X, y, idx, cfg.min_samples_leaf)
    if split is None:
        return TreeNode(-1, 0.0, counts)
    f, thr = split
    mask = X[idx, f] <= thr
    left = _build(X, y, idx[mask], depth + 1, cfg)
    right = _build(X, y, idx[~mask], depth + 1, cfg)
    return TreeNode(f, thr, counts, left, right)


def fit_tree(X: np.ndarray, y: np.ndarray, config: TreeConfig | None = None, layout: str | None = None) -> DecisionTree:
    """Greedy CART fit minimizing Gini impurity."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2:
        raise DimensionMismatchError("X must be 2-D")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatchError("X and y row counts differ")
    if X.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a tree on zero rows")
    if y.min() < 0 or y.max() >= _N_LABELS:
        raise ValidationError(f"labels must be in 0..{_N_LABELS - 1}")
    cfg = config or TreeConfig()
    root = _build(X, y, np.arange(X.shape[0]), 0, cfg)
    return DecisionTree(root, X.shape[1], cfg, layout)


@dataclass
class DecisionForest:
    trees: list[DecisionTree]
    layout: str | None = None

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def predict(self, x: np.ndarray) -> int:
        votes = np.bincount([t.predict(x) for t in self.trees], minlength=_N_LABELS)
        return int(np.argmax(votes))

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        preds = np.stack([t.predict_batch(X) for t in self.trees], axis=1)
        out = np.empty(X.shape[0], dtype=np.int64)
        for i in range(X.shape[0]):
            out[i] = int(np.argmax(np.bincount(preds[i], minlength=_N_LABELS)))
        return out


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int,
    config: TreeConfig | None = None,
    seed: int = 0,
    layout: str | None = None,
) -> DecisionForest:
    """Bootstrap-bagged trees; deterministic given the seed."""
    if n_trees < 1:
        raise ValidationError("n_trees must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a forest on zero rows")
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        sample = rng.integers(0, X.shape[0], X.shape[0])
        trees.append(fit_tree(X[sample], y[sample], config, layout))
    return DecisionForest(trees, layout)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def simulate_step(
    builtup: BuiltupGrid,
    model,
    raster_codes: np.ndarray,
    road_codes: np.ndarray | None,
    radius: int = 1,
):
    """Synchronous one-step update.

    Every cell's features read the frozen input grid; the new state is
    built-up exactly when the predicted transition ends built-up. Returns
    (next BuiltupGrid, transition label array).
    """
    if builtup.nodata_mask is not None:
        raise ValidationError("simulation requires grids without nodata cells")
    expected_layout = feature_layout(
        radius, raster_codes.shape[2], 0 if road_codes is None else road_codes.shape[2]
    )
    if model.layout is not None and model.layout != expected_layout:
        raise ValidationError(
            f"feature layout mismatch: model has {model.layout!r}, inputs give {expected_layout!r}"
        )
    X = build_feature_matrix(builtup.cells, raster_codes, road_codes, radius)
    if X.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"feature width {X.shape[1]} != model width {model.n_features}"
        )
    tau = model.predict_batch(X).reshape(builtup.cells.shape)
    next_cells = np.isin(tau, _BUILT_LABELS).astype(np.uint8)
    return BuiltupGrid(builtup.transform, next_cells), tau


def road_presence_band(roads: RoadNetwork, gt) -> np.ndarray:
    """Binary band marking cells the road index registers as touched."""
    return build_road_index(roads, gt).presence().astype(float)


def baseline_rasterize(roads: RoadNetwork, raster: RasterGrid) -> RasterGrid:
    """Append the rasterized road-presence band as the last raster band."""
    band = road_presence_band(roads, raster.transform)
    return RasterGrid(raster.transform, list(raster.bands) + [band], raster.nodata)


# ---------------------------------------------------------------------------
# model persistence (versioned text, pre-order node list)
# ---------------------------------------------------------------------------

def _write_node(fh, node: TreeNode) -> None:
    if node.is_leaf:
        counts = " ".join(str(int(c)) for c in node.counts)
        fh.write(f"leaf {counts}\n")
    else:
        fh.write(f"node {node.feature} {node.threshold!r}\n")
        _write_node(fh, node.left)
        _write_node(fh, node.right)


def save_model(path, model, extras: dict[str, str] | None = None) -> None:
    trees = model.trees if isinstance(model, DecisionForest) else [model]
    cfg = trees[0].config
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("TREEMODEL 1\n")
        fh.write(f"kind={'forest' if isinstance(model, DecisionForest) else 'tree'}\n")
        fh.write(f"n_features={trees[0].n_features}\n")
        fh.write(f"layout={model.layout or ''}\n")
        fh.write(f"layout_hash={layout_hash(model.layout) if model.layout else ''}\n")
        fh.write(f"max_depth={'' if cfg.max_depth is None else cfg.max_depth}\n")
        fh.write(f"min_samples_leaf={cfg.min_samples_leaf}\n")
        for key, value in sorted((extras or {}).items()):
            fh.write(f"extra.{key}={value}\n")
        fh.write(f"n_trees={len(trees)}\n")
        for i, tree in enumerate(trees):
            fh.write(f"tree {i}\n")
            _write_node(fh, tree.root)


class _NodeReader:
    def __init__(self, lines: list[str], pos: int):
        self.lines = lines
        self.pos = pos

    def read(self) -> TreeNode:
        if self.pos >= len(self.lines):
            raise ParseError(f"line {self.pos + 1}: unexpected end of tree")
        line_no = self.pos + 1
        tokens = self.lines[self.pos].split()
        self.pos += 1
        if tokens and tokens[0] == "leaf":
            if len(tokens) != 1 + _N_LABELS:
                raise ParseError(f"line {line_no}: leaf needs {_N_LABELS} counts")
            counts = np.array([float(t) for t in tokens[1:]])
            return TreeNode(-1, 0.0, counts)
        if tokens and tokens[0] == "node":
            if len(tokens) != 3:
                raise ParseError(f"line {line_no}: node needs feature and threshold")
            feature = int(tokens[1])
            threshold = float(tokens[2])
            left = self.read()
            right = self.read()
            return TreeNode(feature, threshold, left.counts + right.counts, left, right)
        raise ParseError(f"line {line_no}: expected 'node' or 'leaf'")


def load_model(path):
    """Returns (model, extras)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "TREEMODEL 1":
        raise ParseError("line 1: not a tree model file")
    header: dict[str, str] = {}
    pos = 1
    while pos < len(lines) and "=" in lines[pos]:
        key, _, value = lines[pos].partition("=")
        header[key] = value
        pos += 1
    for key in ("kind", "n_features", "n_trees", "min_samples_leaf"):
        if key not in header:
            raise ParseError(f"line {pos}: missing header key {key!r}")
    n_features = int(header["n_features"])
    layout = header.get("layout") or None
    if layout and header.get("layout_hash") != layout_hash(layout):
        raise ParseError("layout hash does not match layout")
    cfg = TreeConfig(
        max_depth=int(header["max_depth"]) if header.get("max_depth") else None,
        min_samples_leaf=int(header["min_samples_leaf"]),
    )
    extras = {k[len("extra."):]: v for k, v in header.items() if k.startswith("extra.")}
    trees = []
    for i in range(int(header["n_trees"])):
        if pos >= len(lines) or lines[pos] != f"tree {i}":
            raise ParseError(f"line {pos + 1}: expected 'tree {i}'")
        reader = _NodeReader(lines, pos + 1)
        root = reader.read()
        pos = reader.pos
        trees.append(DecisionTree(root, n_features, cfg, layout))
    if pos != len(lines):
        raise ParseError(f"line {pos + 1}: trailing content after trees")
    if header["kind"] == "forest":
        return DecisionForest(trees, layout), extras
    if len(trees) != 1:
        raise ParseError("tree model must contain exactly one tree")
    return trees[0], extras
