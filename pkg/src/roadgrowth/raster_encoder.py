"""Single-hidden-layer sigmoid autoencoder over flattened raster patches.

A cell's raster code is the hidden activation for its (2r+1)^2 neighborhood
patch across all bands, with out-of-grid neighbors zero-filled. Bands must
be min-max normalized to [0, 1] before patch extraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import (
    DimensionMismatchError,
    EmptyCorpusError,
    OutOfExtentError,
    ParseError,
    ValidationError,
)
from .formats import RasterGrid
from .nn import DenseParams, SGDConfig

__all__ = [
    "PatchAutoencoder",
    "new_patch_autoencoder",
    "normalize_bands",
    "extract_patch",
    "extract_all_patches",
    "patch_encode",
    "patch_decode",
    "train_patch_autoencoder",
    "encode_raster",
    "save_patch_autoencoder",
    "load_patch_autoencoder",
]


@dataclass
class PatchAutoencoder:
    encoder: DenseParams
    decoder: DenseParams

    def __post_init__(self):
        if self.encoder.b is None or self.decoder.b is None:
            raise DimensionMismatchError("patch autoencoder layers need biases")
        if self.encoder.w.shape != self.decoder.w.shape[::-1]:
            raise DimensionMismatchError("encoder/decoder shapes are not transposes")

    @property
    def patch_dim(self) -> int:
        return self.encoder.w.shape[1]

    @property
    def code_len(self) -> int:
        return self.encoder.w.shape[0]

    def trainable_arrays(self) -> list[np.ndarray]:
        return self.encoder.arrays() + self.decoder.arrays()

    def copy(self) -> "PatchAutoencoder":
        return PatchAutoencoder(self.encoder.copy(), self.decoder.copy())


def new_patch_autoencoder(patch_dim: int, code_len: int, rng: np.random.Generator) -> PatchAutoencoder:
    if patch_dim < 1 or code_len < 1:
        raise ValidationError("patch_dim and code_len must be >= 1")
    return PatchAutoencoder(
        nn.init_dense(patch_dim, code_len, rng),
        nn.init_dense(code_len, patch_dim, rng),
    )


def normalize_bands(raster: RasterGrid) -> np.ndarray:
    """Stack bands as (n_bands, rows, cols), each min-max scaled to [0, 1].

    A constant band maps to all zeros.
    """
    out = []
    for band in raster.bands:
        lo, hi = float(band.min()), float(band.max())
        if hi > lo:
            out.append((band - lo) / (hi - lo))
        else:
            out.append(np.zeros_like(band))
    return np.stack(out, axis=0)


def extract_patch(bands: np.ndarray, row: int, col: int, radius: int) -> np.ndarray:
    """Row-major flattening of one cell's neighborhood across bands.

    Inputs outside the grid raise; neighbors outside the grid contribute 0.
    """
    nb, n_rows, n_cols = bands.shape
    if not (0 <= row < n_rows and 0 <= col < n_cols):
        raise OutOfExtentError(f"cell ({row}, {col}) outside {n_rows}x{n_cols} grid")
    size = 2 * radius + 1
    patch = np.zeros((nb, size, size))
    r0, r1 = max(0, row - radius), min(n_rows, row + radius + 1)
    c0, c1 = max(0, col - radius), min(n_cols, col + radius + 1)
    patch[:, r0 - (row - radius) : r1 - (row - radius), c0 - (col - radius) : c1 - (col - radius)] = bands[
        :, r0:r1, c0:c1
    ]
    return patch.reshape(-1)


def extract_all_patches(bands: np.ndarray, radius: int) -> np.ndarray:
    """All cells' patches as (rows*cols, n_bands*(2r+1)^2), row-major cells."""
    nb, n_rows, n_cols = bands.shape
    size = 2 * radius + 1
    padded = np.zeros((nb, n_rows + 2 * radius, n_cols + 2 * radius))
    padded[:, radius : radius + n_rows, radius : radius + n_cols] = bands
    cols = []
    for b in range(nb):
        for dr in range(size):
            for dc in range(size):
                cols.append(padded[b, dr : dr + n_rows, dc : dc + n_cols].reshape(-1))
    return np.stack(cols, axis=1)


def patch_encode(ae: PatchAutoencoder, x: np.ndarray) -> np.ndarray:
    return nn.sigmoid(nn.dense_forward(ae.encoder, x))


def patch_decode(ae: PatchAutoencoder, code: np.ndarray) -> np.ndarray:
    return nn.sigmoid(nn.dense_forward(ae.decoder, code))


def reconstruction_loss(ae: PatchAutoencoder, patches: np.ndarray) -> float:
    """Mean over samples of the squared reconstruction error norm."""
    x = np.atleast_2d(np.asarray(patches, dtype=float))
    rec = patch_decode(ae, patch_encode(ae, x))
    return float(((rec - x) ** 2).sum(axis=1).mean())


def loss_and_gradients(ae: PatchAutoencoder, x: np.ndarray):
    """Loss and exact gradients for a (batch, patch_dim) block.

    Returns (loss_sum, grads) with grads aligned to trainable_arrays() and
    summed over the batch.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    code = patch_encode(ae, x)
    rec = patch_decode(ae, code)
    err = rec - x
    loss_sum = float((err * err).sum())

    da2 = 2.0 * err * rec * (1.0 - rec)
    g_dec_w = da2.T @ code
    g_dec_b = da2.sum(axis=0)
    dcode = da2 @ ae.decoder.w
    da1 = dcode * code * (1.0 - code)
    g_enc_w = da1.T @ x
    g_enc_b = da1.sum(axis=0)
    return loss_sum, [g_enc_w, g_enc_b, g_dec_w, g_dec_b]


def train_patch_autoencoder(ae: PatchAutoencoder, patches: np.ndarray, cfg: SGDConfig) -> list[float]:
    """Mini-batch SGD on the squared reconstruction objective.

    Returns per-epoch mean loss over all patches.
    """
    x = np.atleast_2d(np.asarray(patches, dtype=float))
    if x.shape[0] == 0:
        raise EmptyCorpusError("no patches to train on")
    if x.shape[1] != ae.patch_dim:
        raise DimensionMismatchError(f"patch dim {x.shape[1]} != {ae.patch_dim}")
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = x[order[start : start + cfg.batch_size]]
            loss_sum, grads = loss_and_gradients(ae, batch)
            epoch_loss += loss_sum
            nn.sgd_step(ae.trainable_arrays(), [g / batch.shape[0] for g in grads], cfg.learning_rate)
        history.append(epoch_loss / n)
    return history


def encode_raster(ae: PatchAutoencoder, bands: np.ndarray, radius: int) -> np.ndarray:
    """Codes for every cell, shape (rows, cols, code_len)."""
    nb, n_rows, n_cols = bands.shape
    patches = extract_all_patches(bands, radius)
    if patches.shape[1] != ae.patch_dim:
        raise DimensionMismatchError(
            f"patch dim {patches.shape[1]} does not match autoencoder {ae.patch_dim}"
        )
    return patch_encode(ae, patches).reshape(n_rows, n_cols, ae.code_len)


def save_patch_autoencoder(path, ae: PatchAutoencoder, radius: int, n_bands: int) -> None:
    nn.save_checkpoint(
        path,
        {
            "meta": np.array([ae.code_len, radius, n_bands], dtype=float),
            "encoder.w": ae.encoder.w,
            "encoder.b": ae.encoder.b,
            "decoder.w": ae.decoder.w,
            "decoder.b": ae.decoder.b,
        },
    )


def load_patch_autoencoder(path):
    """Returns (autoencoder, radius, n_bands)."""
    tensors = nn.load_checkpoint(path)
    for key in ("meta", "encoder.w", "encoder.b", "decoder.w", "decoder.b"):
        if key not in tensors:
            raise ParseError(f"checkpoint is missing tensor {key!r}")
    _, radius, n_bands = tensors["meta"]
    ae = PatchAutoencoder(
        DenseParams(tensors["encoder.w"], tensors["encoder.b"]),
        DenseParams(tensors["decoder.w"], tensors["decoder.b"]),
    )
    return ae, int(radius), int(n_bands)
