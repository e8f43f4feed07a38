"""Dense and LSTM primitives with hand-written reverse-mode gradients,
plain SGD, finite-difference checking, and a small binary checkpoint format.

Everything runs in float64. Batched sequence inputs use shape
(steps, batch, features); forward passes cache what the backward passes
need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatchError,
    EmptySequenceError,
    ParseError,
)

INIT_SCALE = 0.08

__all__ = [
    "SGDConfig",
    "DenseParams",
    "LSTMCellParams",
    "LSTMState",
    "sigmoid",
    "init_dense",
    "init_lstm",
    "dense_forward",
    "lstm_step",
    "lstm_forward",
    "lstm_forward_batch",
    "lstm_backward_batch",
    "sgd_step",
    "finite_difference_gradients",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass
class SGDConfig:
    learning_rate: float = 0.1
    batch_size: int = 64
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class DenseParams:
    """Affine map y = W x + b; b may be None for a pure linear map."""

    w: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        if self.w.ndim != 2:
            raise DimensionMismatchError("dense weight must be 2-D")
        if self.b is not None and self.b.shape != (self.w.shape[0],):
            raise DimensionMismatchError("dense bias shape mismatch")

    def arrays(self) -> list[np.ndarray]:
        return [self.w] if self.b is None else [self.w, self.b]

    def copy(self) -> "DenseParams":
        return DenseParams(self.w.copy(), None if self.b is None else self.b.copy())


@dataclass
class LSTMCellParams:
    """Gate weights of shape (hidden, input+hidden) and per-gate biases."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_c: np.ndarray
    w_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        shape = self.w_f.shape
        hidden = shape[0]
        if shape[1] <= hidden:
            raise DimensionMismatchError("gate weights must be (hidden, input+hidden)")
        for w in (self.w_i, self.w_c, self.w_o):
            if w.shape != shape:
                raise DimensionMismatchError("gate weight shapes differ")
        for b in (self.b_f, self.b_i, self.b_c, self.b_o):
            if b.shape != (hidden,):
                raise DimensionMismatchError("gate bias shape mismatch")

    @property
    def hidden_dim(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.w_f, self.w_i, self.w_c, self.w_o, self.b_f, self.b_i, self.b_c, self.b_o]

    def copy(self) -> "LSTMCellParams":
        return LSTMCellParams(*[a.copy() for a in self.arrays()])


@dataclass
class LSTMState:
    h: np.ndarray
    c: np.ndarray


def init_dense(in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True) -> DenseParams:
    w = rng.uniform(-INIT_SCALE, INIT_SCALE, (out_dim, in_dim))
    b = rng.uniform(-INIT_SCALE, INIT_SCALE, out_dim) if bias else None
    return DenseParams(w, b)


def init_lstm(input_dim: int, hidden_dim: int, rng: np.random.Generator) -> LSTMCellParams:
    def u(*shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, shape)

    z = input_dim + hidden_dim
    return LSTMCellParams(
        u(hidden_dim, z), u(hidden_dim, z), u(hidden_dim, z), u(hidden_dim, z),
        u(hidden_dim), u(hidden_dim), u(hidden_dim), u(hidden_dim),
    )


def dense_forward(params: DenseParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.w.shape[1]:
        raise DimensionMismatchError(
            f"dense input dim {x.shape[-1]} != {params.w.shape[1]}"
        )
    y = x @ params.w.T
    if params.b is not None:
        y = y + params.b
    return y


def lstm_step(params: LSTMCellParams, x: np.ndarray, state: LSTMState) -> LSTMState:
    """One LSTM update.

    With z = [x, h_prev]: f = s(Wf z + bf), i = s(Wi z + bi),
    g = tanh(Wc z + bc), o = s(Wo z + bo); c = f*c_prev + i*g;
    h = o*tanh(c). Accepts a single vector or a (batch, features) block.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    hb = state.h[None, :] if single else state.h
    cb = state.c[None, :] if single else state.c
    if xb.shape[-1] != params.input_dim:
        raise DimensionMismatchError(f"input dim {xb.shape[-1]} != {params.input_dim}")
    if hb.shape[-1] != params.hidden_dim or cb.shape[-1] != params.hidden_dim:
        raise DimensionMismatchError("state dim does not match cell")
    z = np.concatenate([xb, hb], axis=-1)
    f = sigmoid(z @ params.w_f.T + params.b_f)
    i = sigmoid(z @ params.w_i.T + params.b_i)
    g = np.tanh(z @ params.w_c.T + params.b_c)
    o = sigmoid(z @ params.w_o.T + params.b_o)
    c = f * cb + i * g
    h = o * np.tanh(c)
    if single:
        return LSTMState(h[0], c[0])
    return LSTMState(h, c)


def lstm_forward_batch(params: LSTMCellParams, xs: np.ndarray):
    """Run the cell over (steps, batch, features) from a zero initial state.

    Returns (H, C, cache) where H and C are (steps, batch, hidden) and the
    cache feeds lstm_backward_batch.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 3:
        raise DimensionMismatchError("batched input must be (steps, batch, features)")
    T, B, D = xs.shape
    if T == 0:
        raise EmptySequenceError("sequence has zero steps")
    if D != params.input_dim:
        raise DimensionMismatchError(f"input dim {D} != {params.input_dim}")
    H = params.hidden_dim
    Z = np.empty((T, B, D + H))
    F = np.empty((T, B, H))
    I = np.empty((T, B, H))
    G = np.empty((T, B, H))
    O = np.empty((T, B, H))
    C = np.empty((T, B, H))
    TC = np.empty((T, B, H))
    Hout = np.empty((T, B, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = np.concatenate([xs[t], h], axis=-1)
        Z[t] = z
        F[t] = sigmoid(z @ params.w_f.T + params.b_f)
        I[t] = sigmoid(z @ params.w_i.T + params.b_i)
        G[t] = np.tanh(z @ params.w_c.T + params.b_c)
        O[t] = sigmoid(z @ params.w_o.T + params.b_o)
        c = F[t] * c + I[t] * G[t]
        C[t] = c
        TC[t] = np.tanh(c)
        h = O[t] * TC[t]
        Hout[t] = h
    cache = {"Z": Z, "F": F, "I": I, "G": G, "O": O, "C": C, "TC": TC, "D": D}
    return Hout, C, cache


def lstm_forward(params: LSTMCellParams, xs: np.ndarray) -> list[LSTMState]:
    """Run the cell over a (steps, features) sequence; returns per-step states."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2:
        raise DimensionMismatchError("sequence must be (steps, features)")
    if xs.shape[0] == 0:
        raise EmptySequenceError("sequence has zero steps")
    H, C, _ = lstm_forward_batch(params, xs[:, None, :])
    return [LSTMState(H[t, 0].copy(), C[t, 0].copy()) for t in range(xs.shape[0])]


def lstm_backward_batch(params: LSTMCellParams, cache, dh: np.ndarray, dc_last: np.ndarray | None = None):
    """Backpropagate through time given per-step gradients on the outputs.

    ``dh`` is (steps, batch, hidden). Returns (grads, dx) where grads align
    with ``params.arrays()`` and hold sums over the batch, and dx is
    (steps, batch, features).
    """
    Z, F, I, G, O, C, TC = (cache[k] for k in ("Z", "F", "I", "G", "O", "C", "TC"))
    D = cache["D"]
    T, B, H = F.shape
    grads = [np.zeros_like(a) for a in params.arrays()]
    gw_f, gw_i, gw_c, gw_o, gb_f, gb_i, gb_c, gb_o = grads
    dx = np.empty((T, B, D))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H)) if dc_last is None else dc_last.copy()
    for t in range(T - 1, -1, -1):
        dh_t = dh[t] + dh_next
        do = dh_t * TC[t]
        dc = dc_next + dh_t * O[t] * (1.0 - TC[t] ** 2)
        c_prev = C[t - 1] if t > 0 else np.zeros((B, H))
        df = dc * c_prev
        di = dc * G[t]
        dg = dc * I[t]
        dc_next = dc * F[t]
        da_f = df * F[t] * (1.0 - F[t])
        da_i = di * I[t] * (1.0 - I[t])
        da_g = dg * (1.0 - G[t] ** 2)
        da_o = do * O[t] * (1.0 - O[t])
        z = Z[t]
        gw_f += da_f.T @ z
        gw_i += da_i.T @ z
        gw_c += da_g.T @ z
        gw_o += da_o.T @ z
        gb_f += da_f.sum(axis=0)
        gb_i += da_i.sum(axis=0)
        gb_c += da_g.sum(axis=0)
        gb_o += da_o.sum(axis=0)
        dz = da_f @ params.w_f + da_i @ params.w_i + da_g @ params.w_c + da_o @ params.w_o
        dx[t] = dz[:, :D]
        dh_next = dz[:, D:]
    return grads, dx


def sgd_step(arrays: list[np.ndarray], grads: list[np.ndarray], learning_rate: float) -> list[np.ndarray]:
    """In-place vanilla SGD update: a -= lr * g. Returns the arrays."""
    if len(arrays) != len(grads):
        raise DimensionMismatchError("parameter/gradient count mismatch")
    for a, g in zip(arrays, grads):
        if a.shape != g.shape:
            raise DimensionMismatchError(f"shape mismatch {a.shape} vs {g.shape}")
        a -= learning_rate * g
    return arrays


def finite_difference_gradients(f, arrays: list[np.ndarray], step: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of scalar f() with respect to each array element.

    Mutates each array in place around its original value; f must read the
    arrays on every call.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + step
            fp = f()
            a[idx] = orig - step
            fm = f()
            a[idx] = orig
            g[idx] = (fp - fm) / (2.0 * step)
            it.iternext()
        grads.append(g)
    return grads


# ---------------------------------------------------------------------------
# checkpoints: text header naming tensors, then little-endian float64 blobs
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"NNCKPT 1"


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC + b"\n")
        for name, arr in tensors.items():
            if any(ch.isspace() for ch in name):
                raise ValueError(f"tensor name {name!r} contains whitespace")
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"tensor {name} {arr.ndim}{' ' + dims if dims else ''}\n".encode("ascii"))
        fh.write(b"DATA\n")
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0 or blob[:nl] != _CKPT_MAGIC:
        raise ParseError("line 1: not a checkpoint file")
    specs: list[tuple[str, tuple[int, ...]]] = []
    pos = nl + 1
    line_no = 2
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise ParseError(f"line {line_no}: unterminated header")
        line = blob[pos:nl].decode("ascii", errors="replace")
        pos = nl + 1
        if line == "DATA":
            break
        parts = line.split()
        if len(parts) < 3 or parts[0] != "tensor":
            raise ParseError(f"line {line_no}: expected 'tensor <name> <ndim> <dims...>'")
        try:
            ndim = int(parts[2])
            shape = tuple(int(d) for d in parts[3:])
        except ValueError as exc:
            raise ParseError(f"line {line_no}: non-integer dimension") from exc
        if len(shape) != ndim:
            raise ParseError(f"line {line_no}: dimension count mismatch")
        specs.append((parts[1], shape))
        line_no += 1
    out: dict[str, np.ndarray] = {}
    for name, shape in specs:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if pos + nbytes > len(blob):
            raise ParseError(f"tensor {name!r}: truncated data")
        arr = np.frombuffer(blob[pos : pos + nbytes], dtype="<f8").astype(float)
        out[name] = arr.reshape(shape)
        pos += nbytes
    if pos != len(blob):
        raise ParseError("trailing bytes after tensor data")
    return out
