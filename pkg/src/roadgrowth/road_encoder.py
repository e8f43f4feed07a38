"""LSTM sequence autoencoders over per-axis coordinate sequences.

A road fragment is a variable-length run of (x, y) points. Each axis gets
its own autoencoder: an LSTM encoder reads the normalized scalar sequence,
its final hidden state passes through an affine bridge, and an LSTM decoder
(fed the bridged code at every step, with a linear readout) reconstructs
the sequence at its original length. A cell's fixed-length code is the
concatenation of the y-axis and x-axis codes, averaged over the cell's
fragments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import (
    DimensionMismatchError,
    EmptyCorpusError,
    EmptySequenceError,
    LengthExceededError,
    ParseError,
    ValidationError,
)
from .geometry import GeoTransform
from .nn import DenseParams, LSTMCellParams, SGDConfig

__all__ = [
    "AxisNormalizer",
    "SequenceAutoencoder",
    "RoadEncoder",
    "new_sequence_autoencoder",
    "new_road_encoder",
    "encode",
    "decode",
    "reconstruction_loss",
    "loss_and_gradients",
    "axis_corpora",
    "train_road_encoder",
    "encode_cells",
    "save_road_encoder",
    "load_road_encoder",
]


@dataclass
class AxisNormalizer:
    """Per-axis affine map of map units onto [0, 1] over a study extent."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValidationError("normalizer spans must be positive")

    @classmethod
    def from_transform(cls, gt: GeoTransform) -> "AxisNormalizer":
        ext = gt.extent
        return cls(ext.min_x, ext.max_x, ext.min_y, ext.max_y)

    def normalize_x(self, v):
        return (np.asarray(v, dtype=float) - self.x_min) / (self.x_max - self.x_min)

    def normalize_y(self, v):
        return (np.asarray(v, dtype=float) - self.y_min) / (self.y_max - self.y_min)

    def denormalize_x(self, v):
        return np.asarray(v, dtype=float) * (self.x_max - self.x_min) + self.x_min

    def denormalize_y(self, v):
        return np.asarray(v, dtype=float) * (self.y_max - self.y_min) + self.y_min


@dataclass
class SequenceAutoencoder:
    """Encoder LSTM + affine bridge + decoder LSTM + linear readout."""

    encoder: LSTMCellParams
    bridge: DenseParams
    decoder: LSTMCellParams
    readout: DenseParams
    max_len: int = 18
    split_streams: bool = False

    def __post_init__(self):
        n = self.encoder.hidden_dim
        if self.encoder.input_dim != 1:
            raise DimensionMismatchError("encoder must take scalar inputs")
        if self.bridge.w.shape != (n, n):
            raise DimensionMismatchError("bridge must map hidden -> hidden")
        if self.decoder.hidden_dim != n or self.decoder.input_dim != n:
            raise DimensionMismatchError("decoder dims must match hidden size")
        if self.readout.w.shape != (1, n) or self.readout.b is not None:
            raise DimensionMismatchError("readout must be a bias-free hidden -> 1 map")

    @property
    def n_hidden(self) -> int:
        return self.encoder.hidden_dim

    def trainable_arrays(self) -> list[np.ndarray]:
        return (
            self.encoder.arrays()
            + self.bridge.arrays()
            + self.decoder.arrays()
            + self.readout.arrays()
        )

    def copy(self) -> "SequenceAutoencoder":
        return SequenceAutoencoder(
            self.encoder.copy(),
            self.bridge.copy(),
            self.decoder.copy(),
            self.readout.copy(),
            self.max_len,
            self.split_streams,
        )


def _stream_mask(n_hidden: int) -> np.ndarray:
    """Gate-weight mask keeping each hidden unit's recurrence to itself.

    Column 0 is the scalar input; columns 1.. are the recurrent part, where
    unit j may only read its own previous output.
    """
    mask = np.zeros((n_hidden, 1 + n_hidden))
    mask[:, 0] = 1.0
    mask[:, 1:] = np.eye(n_hidden)
    return mask


def new_sequence_autoencoder(
    n_hidden: int,
    rng: np.random.Generator,
    max_len: int = 18,
    split_streams: bool = False,
) -> SequenceAutoencoder:
    if n_hidden < 1:
        raise ValidationError("n_hidden must be >= 1")
    enc = nn.init_lstm(1, n_hidden, rng)
    bridge = nn.init_dense(n_hidden, n_hidden, rng)
    dec = nn.init_lstm(n_hidden, n_hidden, rng)
    readout = nn.init_dense(n_hidden, 1, rng, bias=False)
    model = SequenceAutoencoder(enc, bridge, dec, readout, max_len, split_streams)
    if split_streams:
        mask = _stream_mask(n_hidden)
        for w in (enc.w_f, enc.w_i, enc.w_c, enc.w_o):
            w *= mask
    return model


def _check_sequence(model: SequenceAutoencoder, seq: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq, dtype=float).ravel()
    if seq.size == 0:
        raise EmptySequenceError("cannot encode an empty sequence")
    if seq.size > model.max_len:
        raise LengthExceededError(f"sequence length {seq.size} exceeds max {model.max_len}")
    return seq


def encode(model: SequenceAutoencoder, seq) -> np.ndarray:
    """Code of a scalar sequence: the encoder's final hidden state."""
    seq = _check_sequence(model, seq)
    H, _, _ = nn.lstm_forward_batch(model.encoder, seq[:, None, None])
    return H[-1, 0].copy()


def encode_batch(model: SequenceAutoencoder, xs: np.ndarray) -> np.ndarray:
    """Codes for same-length sequences stacked as (steps, batch)."""
    if xs.shape[0] > model.max_len:
        raise LengthExceededError(f"sequence length {xs.shape[0]} exceeds max {model.max_len}")
    H, _, _ = nn.lstm_forward_batch(model.encoder, xs[:, :, None])
    return H[-1].copy()


def decode(model: SequenceAutoencoder, code: np.ndarray, m: int) -> np.ndarray:
    """Reconstruct m steps from a code.

    The bridged code feeds the decoder at every step; each step's output is
    the linear readout of the decoder's hidden state.
    """
    if m < 1:
        raise EmptySequenceError("decode length must be >= 1")
    c = nn.dense_forward(model.bridge, np.asarray(code, dtype=float))
    dec_in = np.repeat(c[None, None, :], m, axis=0)
    H, _, _ = nn.lstm_forward_batch(model.decoder, dec_in)
    return (H[:, 0, :] @ model.readout.w.T)[:, 0]


def reconstruction_loss(model: SequenceAutoencoder, seq) -> float:
    """Mean squared reconstruction error over the sequence's steps."""
    seq = _check_sequence(model, seq)
    rec = decode(model, encode(model, seq), seq.size)
    return float(np.mean((rec - seq) ** 2))


def loss_and_gradients(model: SequenceAutoencoder, xs: np.ndarray):
    """Loss and exact gradients for same-length sequences (steps, batch).

    Returns (loss_sum, grads) where loss_sum is the sum of per-sequence mean
    squared errors and grads align with ``model.trainable_arrays()`` and
    hold sums over the batch.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2:
        raise DimensionMismatchError("expected (steps, batch)")
    T, B = xs.shape
    He, _, cache_e = nn.lstm_forward_batch(model.encoder, xs[:, :, None])
    h_top = He[-1]
    code = nn.dense_forward(model.bridge, h_top)
    dec_in = np.repeat(code[None, :, :], T, axis=0)
    Hd, _, cache_d = nn.lstm_forward_batch(model.decoder, dec_in)
    y = np.einsum("tbh,h->tb", Hd, model.readout.w[0])
    err = y - xs
    loss_sum = float((err * err).mean(axis=0).sum())

    dy = (2.0 / T) * err
    g_readout = np.einsum("tb,tbh->h", dy, Hd)[None, :]
    dHd = dy[:, :, None] * model.readout.w[0]
    g_dec, dXd = nn.lstm_backward_batch(model.decoder, cache_d, dHd)
    dcode = dXd.sum(axis=0)
    g_bridge_w = dcode.T @ h_top
    g_bridge_b = dcode.sum(axis=0)
    dh_top = dcode @ model.bridge.w
    dHe = np.zeros_like(He)
    dHe[-1] = dh_top
    g_enc, _ = nn.lstm_backward_batch(model.encoder, cache_e, dHe)
    grads = list(g_enc) + [g_bridge_w, g_bridge_b] + list(g_dec) + [g_readout]
    return loss_sum, grads


def train_axis(
    model: SequenceAutoencoder,
    seqs: list[np.ndarray],
    cfg: SGDConfig,
    rng: np.random.Generator,
    snapshot_epochs: tuple[int, ...] = (),
):
    """Mini-batch SGD on the reconstruction objective for one axis.

    Returns (history, snapshots): per-epoch mean loss over all sequences,
    and parameter copies keyed by 1-based epoch number for every requested
    snapshot epoch.
    """
    if not seqs:
        raise EmptyCorpusError("no sequences to train on")
    seqs = [_check_sequence(model, s) for s in seqs]
    mask = _stream_mask(model.n_hidden) if model.split_streams else None
    history: list[float] = []
    snapshots: dict[int, SequenceAutoencoder] = {}
    n = len(seqs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            groups: dict[int, list[int]] = {}
            for idx in batch:
                groups.setdefault(seqs[idx].size, []).append(int(idx))
            acc = None
            for length in sorted(groups):
                xs = np.stack([seqs[i] for i in groups[length]], axis=1)
                loss_sum, grads = loss_and_gradients(model, xs)
                epoch_loss += loss_sum
                acc = grads if acc is None else [a + g for a, g in zip(acc, grads)]
            scale = 1.0 / len(batch)
            grads = [g * scale for g in acc]
            if mask is not None:
                for k in range(4):
                    grads[k] = grads[k] * mask
            nn.sgd_step(model.trainable_arrays(), grads, cfg.learning_rate)
        history.append(epoch_loss / n)
        if (epoch + 1) in snapshot_epochs:
            snapshots[epoch + 1] = model.copy()
    return history, snapshots


# ---------------------------------------------------------------------------
# two-axis composition
# ---------------------------------------------------------------------------

@dataclass
class RoadEncoder:
    """Paired y-axis and x-axis autoencoders sharing one normalizer."""

    lat: SequenceAutoencoder
    lon: SequenceAutoencoder
    normalizer: AxisNormalizer

    def __post_init__(self):
        if self.lat.n_hidden != self.lon.n_hidden:
            raise DimensionMismatchError("axis models must share hidden size")

    @property
    def rep_size(self) -> int:
        return 2 * self.lat.n_hidden

    def copy(self) -> "RoadEncoder":
        return RoadEncoder(self.lat.copy(), self.lon.copy(), self.normalizer)


def new_road_encoder(
    n_hidden: int,
    normalizer: AxisNormalizer,
    seed: int = 0,
    max_len: int = 18,
    split_streams: bool = False,
) -> RoadEncoder:
    rng = np.random.default_rng(seed)
    lat = new_sequence_autoencoder(n_hidden, rng, max_len, split_streams)
    lon = new_sequence_autoencoder(n_hidden, rng, max_len, split_streams)
    return RoadEncoder(lat, lon, normalizer)


def axis_corpora(fragments: dict[tuple[int, int], list[np.ndarray]], normalizer: AxisNormalizer):
    """Split fragments into normalized per-axis scalar sequences.

    Iterates cells in sorted order so corpus order is deterministic. Returns
    (lat_seqs, lon_seqs): y-coordinate and x-coordinate sequences.
    """
    lat_seqs: list[np.ndarray] = []
    lon_seqs: list[np.ndarray] = []
    for key in sorted(fragments):
        for seq in fragments[key]:
            pts = np.asarray(seq, dtype=float)
            lon_seqs.append(normalizer.normalize_x(pts[:, 0]))
            lat_seqs.append(normalizer.normalize_y(pts[:, 1]))
    return lat_seqs, lon_seqs


def train_road_encoder(
    enc: RoadEncoder,
    fragments: dict[tuple[int, int], list[np.ndarray]],
    cfg: SGDConfig,
    snapshot_epochs: tuple[int, ...] = (),
):
    """Train both axis models independently on the fragment corpus.

    Returns (history, snapshots): per-epoch mean losses under keys "lat" and
    "lon", and RoadEncoder copies keyed by epoch for requested snapshots.
    """
    lat_seqs, lon_seqs = axis_corpora(fragments, enc.normalizer)
    if not lat_seqs:
        raise EmptyCorpusError("fragment corpus is empty")
    hist_lat, snap_lat = train_axis(
        enc.lat, lat_seqs, cfg, np.random.default_rng([cfg.seed, 0]), snapshot_epochs
    )
    hist_lon, snap_lon = train_axis(
        enc.lon, lon_seqs, cfg, np.random.default_rng([cfg.seed, 1]), snapshot_epochs
    )
    snapshots = {
        e: RoadEncoder(snap_lat[e], snap_lon[e], enc.normalizer) for e in snap_lat
    }
    return {"lat": hist_lat, "lon": hist_lon}, snapshots


def encode_cells(
    enc: RoadEncoder,
    fragments: dict[tuple[int, int], list[np.ndarray]],
    n_rows: int,
    n_cols: int,
) -> np.ndarray:
    """Fixed-length code per grid cell, shape (n_rows, n_cols, rep_size).

    Each fragment yields concat(lat code, lon code); a cell's code is the
    element-wise mean over its fragments and cells without fragments stay
    all-zero.
    """
    rep = enc.rep_size
    nh = enc.lat.n_hidden
    sums = np.zeros((n_rows, n_cols, rep))
    counts = np.zeros((n_rows, n_cols), dtype=int)
    by_len: dict[int, list[tuple[int, int, np.ndarray]]] = {}
    for (r, c), seqs in fragments.items():
        if not (0 <= r < n_rows and 0 <= c < n_cols):
            raise DimensionMismatchError(f"fragment cell ({r}, {c}) outside grid")
        for seq in seqs:
            pts = np.asarray(seq, dtype=float)
            by_len.setdefault(pts.shape[0], []).append((r, c, pts))
    for length in sorted(by_len):
        items = by_len[length]
        ys = np.stack([enc.normalizer.normalize_y(p[:, 1]) for _, _, p in items], axis=1)
        xs = np.stack([enc.normalizer.normalize_x(p[:, 0]) for _, _, p in items], axis=1)
        lat_codes = encode_batch(enc.lat, ys)
        lon_codes = encode_batch(enc.lon, xs)
        for k, (r, c, _) in enumerate(items):
            sums[r, c, :nh] += lat_codes[k]
            sums[r, c, nh:] += lon_codes[k]
            counts[r, c] += 1
    nonzero = counts > 0
    sums[nonzero] /= counts[nonzero][:, None]
    return sums


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _axis_tensors(prefix: str, model: SequenceAutoencoder) -> dict[str, np.ndarray]:
    out = {}
    for gate in ("f", "i", "c", "o"):
        out[f"{prefix}.encoder.w_{gate}"] = getattr(model.encoder, f"w_{gate}")
        out[f"{prefix}.encoder.b_{gate}"] = getattr(model.encoder, f"b_{gate}")
        out[f"{prefix}.decoder.w_{gate}"] = getattr(model.decoder, f"w_{gate}")
        out[f"{prefix}.decoder.b_{gate}"] = getattr(model.decoder, f"b_{gate}")
    out[f"{prefix}.bridge.w"] = model.bridge.w
    out[f"{prefix}.bridge.b"] = model.bridge.b
    out[f"{prefix}.readout.w"] = model.readout.w
    return out


def _axis_from_tensors(prefix: str, tensors, max_len: int, split: bool) -> SequenceAutoencoder:
    def get(name):
        key = f"{prefix}.{name}"
        if key not in tensors:
            raise ParseError(f"checkpoint is missing tensor {key!r}")
        return tensors[key]

    enc = LSTMCellParams(
        get("encoder.w_f"), get("encoder.w_i"), get("encoder.w_c"), get("encoder.w_o"),
        get("encoder.b_f"), get("encoder.b_i"), get("encoder.b_c"), get("encoder.b_o"),
    )
    dec = LSTMCellParams(
        get("decoder.w_f"), get("decoder.w_i"), get("decoder.w_c"), get("decoder.w_o"),
        get("decoder.b_f"), get("decoder.b_i"), get("decoder.b_c"), get("decoder.b_o"),
    )
    bridge = DenseParams(get("bridge.w"), get("bridge.b"))
    readout = DenseParams(get("readout.w"), None)
    return SequenceAutoencoder(enc, bridge, dec, readout, max_len, split)


def save_road_encoder(path, enc: RoadEncoder) -> None:
    tensors = {
        "meta": np.array(
            [enc.lat.n_hidden, enc.lat.max_len, 1.0 if enc.lat.split_streams else 0.0],
            dtype=float,
        ),
        "normalizer": np.array(
            [enc.normalizer.x_min, enc.normalizer.x_max, enc.normalizer.y_min, enc.normalizer.y_max]
        ),
    }
    tensors.update(_axis_tensors("lat", enc.lat))
    tensors.update(_axis_tensors("lon", enc.lon))
    nn.save_checkpoint(path, tensors)


def load_road_encoder(path) -> RoadEncoder:
    tensors = nn.load_checkpoint(path)
    if "meta" not in tensors or "normalizer" not in tensors:
        raise ParseError("checkpoint is missing meta tensors")
    _, max_len, split = tensors["meta"]
    norm = AxisNormalizer(*tensors["normalizer"])
    lat = _axis_from_tensors("lat", tensors, int(max_len), bool(split))
    lon = _axis_from_tensors("lon", tensors, int(max_len), bool(split))
    return RoadEncoder(lat, lon, norm)
