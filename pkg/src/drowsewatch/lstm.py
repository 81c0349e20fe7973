"""From-scratch LSTM sequence classifier.

Single recurrent layer with forget/input/output gates and a logistic scalar
readout of the final hidden state; trained with plain SGD + momentum via full
backpropagation through time. No autograd or NN library — numpy array math
only, float64 throughout, deterministic per seed.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import Window

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_DIM = 16
INPUT_DIM = 2
DEFAULT_ALARM_THRESHOLD = 0.5

# Parameter packing order, shared by the flat-vector helpers and checkpoints.
PARAM_FIELDS = ("w_i", "w_f", "w_o", "w_g", "b_i", "b_f", "b_o", "b_g", "w_out", "b_out")

_MAGIC = b"DWCK"
_VERSION = 1
_HEADER = struct.Struct("<4sHII")  # magic, version, input_dim, hidden_dim


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Piecewise form never exponentiates a positive argument, so no overflow.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(eq=False)
class LstmModel:
    """Weights and biases of the classifier.

    Gate weight matrices are (hidden, input+hidden); their first input_dim
    columns act on the step input, the rest on the previous hidden state.
    """

    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    w_out: np.ndarray
    b_out: float

    def __post_init__(self) -> None:
        for name in PARAM_FIELDS[:-1]:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "b_out", float(self.b_out))
        self.validate()

    @property
    def hidden_dim(self) -> int:
        return self.w_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_i.shape[1] - self.w_i.shape[0]

    def validate(self) -> None:
        h, cols = self.w_i.shape
        if cols <= h:
            raise ValueError(f"gate weights must be (hidden, input+hidden), got {self.w_i.shape}")
        for name in ("w_i", "w_f", "w_o", "w_g"):
            if getattr(self, name).shape != (h, cols):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(h, cols)}")
        for name in ("b_i", "b_f", "b_o", "b_g", "w_out"):
            if getattr(self, name).shape != (h,):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(h,)}")
        for name in PARAM_FIELDS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    def param_count(self) -> int:
        return 4 * self.w_i.size + 4 * self.hidden_dim + self.hidden_dim + 1

    def to_vector(self) -> np.ndarray:
        """Flatten all parameters in PARAM_FIELDS order."""
        parts = [np.asarray(getattr(self, name), dtype=np.float64).ravel() for name in PARAM_FIELDS]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vector: np.ndarray, hidden_dim: int, input_dim: int = INPUT_DIM) -> "LstmModel":
        """Rebuild a model from a flat parameter vector (PARAM_FIELDS order)."""
        vector = np.asarray(vector, dtype=np.float64)
        shapes = _param_shapes(hidden_dim, input_dim)
        expected = sum(int(np.prod(s)) for s in shapes.values())
        if vector.shape != (expected,):
            raise ValueError(f"expected parameter vector of length {expected}, got {vector.shape}")
        values = {}
        offset = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            chunk = vector[offset : offset + size]
            values[name] = float(chunk[0]) if shape == () else chunk.reshape(shape).copy()
            offset += size
        return cls(**values)


def _param_shapes(hidden_dim: int, input_dim: int) -> dict[str, tuple]:
    gate = (hidden_dim, input_dim + hidden_dim)
    bias = (hidden_dim,)
    return {
        "w_i": gate, "w_f": gate, "w_o": gate, "w_g": gate,
        "b_i": bias, "b_f": bias, "b_o": bias, "b_g": bias,
        "w_out": bias, "b_out": (),
    }


def init_model(
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    input_dim: int = INPUT_DIM,
    seed: int = 0,
    forget_bias: float = 1.0,
) -> LstmModel:
    """Fresh model: uniform(-1/sqrt(hidden), +1/sqrt(hidden)) weights, zero
    biases except the forget gate, which starts positive so early gradients
    can flow through the cell state."""
    if hidden_dim < 1 or input_dim < 1:
        raise ValueError("hidden_dim and input_dim must be positive")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden_dim)
    gate = (hidden_dim, input_dim + hidden_dim)

    def w(shape):
        return rng.uniform(-bound, bound, size=shape)

    return LstmModel(
        w_i=w(gate), w_f=w(gate), w_o=w(gate), w_g=w(gate),
        b_i=np.zeros(hidden_dim), b_f=np.full(hidden_dim, forget_bias),
        b_o=np.zeros(hidden_dim), b_g=np.zeros(hidden_dim),
        w_out=w(hidden_dim), b_out=0.0,
    )


@dataclass(frozen=True, eq=False)
class LabeledSequence:
    """One normalized window and its class (1 = drowsy, 0 = alert)."""

    inputs: np.ndarray
    label: int

    def __post_init__(self) -> None:
        arr = np.array(self.inputs, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError(f"inputs must be a (steps, features) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite values in inputs")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("inputs must be normalized to [0,1]")
        arr.setflags(write=False)
        object.__setattr__(self, "inputs", arr)
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")

    @classmethod
    def from_window(cls, window: Window, label: int) -> "LabeledSequence":
        return cls(window.normalized(), label)


def _stacked_gates(model: LstmModel, input_dim: int):
    # Row blocks ordered i, f, o, g; one matmul per step instead of four.
    wx = np.vstack([model.w_i[:, :input_dim], model.w_f[:, :input_dim],
                    model.w_o[:, :input_dim], model.w_g[:, :input_dim]])
    wh = np.vstack([model.w_i[:, input_dim:], model.w_f[:, input_dim:],
                    model.w_o[:, input_dim:], model.w_g[:, input_dim:]])
    b = np.concatenate([model.b_i, model.b_f, model.b_o, model.b_g])
    return wx, wh, b


def _forward_batch(model: LstmModel, x: np.ndarray, keep_cache: bool = False):
    """Run the recurrence over a (batch, steps, input_dim) array.

    Returns (probabilities, logits, cache); cache holds per-step activations
    when keep_cache is set, else None.
    """
    batch, steps, input_dim = x.shape
    if input_dim != model.input_dim:
        raise ValueError(f"input feature size {input_dim} != model input_dim {model.input_dim}")
    hidden = model.hidden_dim
    wx, wh, b = _stacked_gates(model, input_dim)
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    cache = None
    if keep_cache:
        cache = {
            "gates": np.empty((steps, batch, 4 * hidden)),
            "tanh_c": np.empty((steps, batch, hidden)),
            "h": np.zeros((steps + 1, batch, hidden)),
            "c": np.zeros((steps + 1, batch, hidden)),
            "wh": wh,
        }
    for t in range(steps):
        acts = x[:, t, :] @ wx.T + h @ wh.T + b
        sig = _sigmoid(acts[:, : 3 * hidden])
        i = sig[:, :hidden]
        f = sig[:, hidden : 2 * hidden]
        o = sig[:, 2 * hidden :]
        g = np.tanh(acts[:, 3 * hidden :])
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        if keep_cache:
            cache["gates"][t, :, : 3 * hidden] = sig
            cache["gates"][t, :, 3 * hidden :] = g
            cache["tanh_c"][t] = tanh_c
            cache["h"][t + 1] = h
            cache["c"][t + 1] = c
    logits = h @ model.w_out + model.b_out
    return _sigmoid(logits), logits, cache


def forward(model: LstmModel, inputs: np.ndarray | Window) -> float:
    """Drowsiness probability in (0,1) for one normalized window.

    Accepts a Window (normalized internally) or a (steps, 2) array already in
    [0,1]. Pure: no state survives between calls.
    """
    if isinstance(inputs, Window):
        x = inputs.normalized()
    else:
        x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"inputs must be a (steps, features) array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in inputs")
    probs, _, _ = _forward_batch(model, x[None, :, :])
    return float(probs[0])


def classify(
    model: LstmModel,
    inputs: np.ndarray | Window,
    threshold: float = DEFAULT_ALARM_THRESHOLD,
) -> bool:
    """Alarm decision for one window: probability >= threshold.

    The tie at the threshold alarms — the fail-safe direction.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be inside (0,1), got {threshold}")
    return forward(model, inputs) >= threshold


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _bptt(model: LstmModel, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Mean binary cross-entropy over the batch and its gradient as a flat
    vector in PARAM_FIELDS order."""
    batch, steps, input_dim = x.shape
    hidden = model.hidden_dim
    probs, logits, cache = _forward_batch(model, x, keep_cache=True)
    losses = _softplus(logits) - y * logits
    if not np.all(np.isfinite(losses)):
        bad = int(np.flatnonzero(~np.isfinite(losses))[0])
        raise ValueError(f"non-finite loss for sequence {bad} in batch")
    loss = float(losses.mean())

    gates = cache["gates"]
    tanh_c = cache["tanh_c"]
    h_all = cache["h"]
    c_all = cache["c"]
    wh = cache["wh"]

    d_logits = (probs - y) / batch
    d_w_out = h_all[steps].T @ d_logits
    d_b_out = float(d_logits.sum())
    dh = d_logits[:, None] * model.w_out[None, :]
    dc = np.zeros((batch, hidden))
    d_wx = np.zeros((4 * hidden, input_dim))
    d_wh = np.zeros((4 * hidden, hidden))
    d_b = np.zeros(4 * hidden)
    d_acts = np.empty((batch, 4 * hidden))
    for t in range(steps - 1, -1, -1):
        i = gates[t, :, :hidden]
        f = gates[t, :, hidden : 2 * hidden]
        o = gates[t, :, 2 * hidden : 3 * hidden]
        g = gates[t, :, 3 * hidden :]
        tc = tanh_c[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        d_acts[:, :hidden] = dc * g * i * (1.0 - i)
        d_acts[:, hidden : 2 * hidden] = dc * c_all[t] * f * (1.0 - f)
        d_acts[:, 2 * hidden : 3 * hidden] = dh * tc * o * (1.0 - o)
        d_acts[:, 3 * hidden :] = dc * i * (1.0 - g * g)
        d_wx += d_acts.T @ x[:, t, :]
        d_wh += d_acts.T @ h_all[t]
        d_b += d_acts.sum(axis=0)
        dh = d_acts @ wh
        dc = dc * f
    grad_parts = []
    for row in range(4):
        block = slice(row * hidden, (row + 1) * hidden)
        grad_parts.append(np.hstack([d_wx[block], d_wh[block]]).ravel())
    grad_parts.append(d_b)
    grad_parts.append(d_w_out)
    grad_parts.append(np.array([d_b_out]))
    return np.concatenate(grad_parts), loss


@dataclass(eq=False)
class LstmGradients:
    """Per-parameter loss gradients, mirroring LstmModel's fields."""

    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    w_out: np.ndarray
    b_out: float

    def to_vector(self) -> np.ndarray:
        parts = [np.asarray(getattr(self, name), dtype=np.float64).ravel() for name in PARAM_FIELDS]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vector: np.ndarray, hidden_dim: int, input_dim: int) -> "LstmGradients":
        shapes = _param_shapes(hidden_dim, input_dim)
        values = {}
        offset = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            chunk = vector[offset : offset + size]
            values[name] = float(chunk[0]) if shape == () else chunk.reshape(shape).copy()
            offset += size
        return cls(**values)


def _stack_batch(batch: Sequence[LabeledSequence]) -> tuple[np.ndarray, np.ndarray]:
    if not batch:
        raise ValueError("batch must not be empty")
    shape = batch[0].inputs.shape
    for k, seq in enumerate(batch):
        if seq.inputs.shape != shape:
            raise ValueError(f"sequence {k} shape {seq.inputs.shape} != {shape}")
    x = np.stack([seq.inputs for seq in batch])
    y = np.array([seq.label for seq in batch], dtype=np.float64)
    return x, y


def backward(model: LstmModel, batch: Sequence[LabeledSequence]) -> tuple[LstmGradients, float]:
    """Gradients of the mean binary cross-entropy over a batch, by full
    backpropagation through time, plus the loss itself."""
    x, y = _stack_batch(batch)
    grad_vec, loss = _bptt(model, x, y)
    return LstmGradients.from_vector(grad_vec, model.hidden_dim, model.input_dim), loss


def batch_loss(model: LstmModel, batch: Sequence[LabeledSequence]) -> float:
    """Mean binary cross-entropy without gradients (forward pass only)."""
    x, y = _stack_batch(batch)
    _, logits, _ = _forward_batch(model, x)
    losses = _softplus(logits) - y * logits
    return float(losses.mean())


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    clip_norm: float = 5.0
    seed: int = 0
    val_fraction: float = 0.1
    hidden_dim: int = DEFAULT_HIDDEN_DIM

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0,1), got {self.momentum}")
        if self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be inside (0,1), got {self.val_fraction}")
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")


@dataclass(eq=False)
class TrainResult:
    model: LstmModel
    train_losses: list[float]
    val_losses: list[float]
    val_accuracies: list[float]
    best_epoch: int
    val_accuracy: float


def train(dataset: Sequence[LabeledSequence], config: TrainConfig = TrainConfig()) -> TrainResult:
    """Train on a two-class dataset; deterministic given config.seed.

    Holds out val_fraction of the data (seeded shuffle), runs SGD with momentum
    and global gradient-norm clipping, and returns the parameters from the
    epoch with the lowest validation loss.
    """
    labels = {seq.label for seq in dataset}
    if labels != {0, 1}:
        raise ValueError(f"dataset must contain both classes, found labels {sorted(labels)}")
    x_all, y_all = _stack_batch(dataset)
    n = len(dataset)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    n_val = max(1, round(n * config.val_fraction))
    if n_val >= n:
        raise ValueError(f"dataset of {n} sequences too small for validation split")
    val_idx, train_idx = order[:n_val], order[n_val:]
    x_val, y_val = x_all[val_idx], y_all[val_idx]

    model = init_model(config.hidden_dim, x_all.shape[2], seed=config.seed)
    params = model.to_vector()
    velocity = np.zeros_like(params)
    train_losses: list[float] = []
    val_losses: list[float] = []
    val_accuracies: list[float] = []
    best_epoch = -1
    best_val = np.inf
    best_params = params.copy()
    for epoch in range(config.epochs):
        epoch_order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for lo in range(0, len(epoch_order), config.batch_size):
            idx = epoch_order[lo : lo + config.batch_size]
            grad, loss = _bptt(model, x_all[idx], y_all[idx])
            total += loss * len(idx)
            norm = float(np.linalg.norm(grad))
            if norm > config.clip_norm:
                grad *= config.clip_norm / norm
            velocity = config.momentum * velocity - config.learning_rate * grad
            params = params + velocity
            model = LstmModel.from_vector(params, config.hidden_dim, x_all.shape[2])
        train_losses.append(total / len(epoch_order))
        probs, logits, _ = _forward_batch(model, x_val)
        val_loss = float((_softplus(logits) - y_val * logits).mean())
        val_losses.append(val_loss)
        val_accuracies.append(float(((probs >= 0.5) == (y_val == 1.0)).mean()))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = params.copy()
        if (epoch + 1) % 10 == 0 or epoch == 0:
            logger.info(
                "epoch %d/%d train_loss=%.4f val_loss=%.4f val_acc=%.3f",
                epoch + 1, config.epochs, train_losses[-1], val_loss, val_accuracies[-1],
            )
    best_model = LstmModel.from_vector(best_params, config.hidden_dim, x_all.shape[2])
    probs, _, _ = _forward_batch(best_model, x_val)
    best_accuracy = float(((probs >= 0.5) == (y_val == 1.0)).mean())
    return TrainResult(
        model=best_model,
        train_losses=train_losses,
        val_losses=val_losses,
        val_accuracies=val_accuracies,
        best_epoch=best_epoch,
        val_accuracy=best_accuracy,
    )


class CheckpointError(ValueError):
    """Unreadable, truncated, or wrong-version checkpoint payload."""


def save_checkpoint(model: LstmModel) -> bytes:
    """Versioned binary: header then float64 little-endian parameters in
    PARAM_FIELDS order."""
    header = _HEADER.pack(_MAGIC, _VERSION, model.input_dim, model.hidden_dim)
    return header + model.to_vector().astype("<f8").tobytes()


def load_checkpoint(data: bytes) -> LstmModel:
    """Inverse of save_checkpoint; strict about version and payload size."""
    if len(data) < _HEADER.size:
        raise CheckpointError(f"checkpoint too short: {len(data)} bytes")
    magic, version, input_dim, hidden_dim = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {_VERSION})")
    if input_dim < 1 or hidden_dim < 1:
        raise CheckpointError(f"invalid dimensions input={input_dim} hidden={hidden_dim}")
    count = 4 * hidden_dim * (input_dim + hidden_dim) + 5 * hidden_dim + 1
    expected = _HEADER.size + 8 * count
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "oversized"
        raise CheckpointError(f"{kind} checkpoint: {len(data)} bytes, expected {expected}")
    vector = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    try:
        return LstmModel.from_vector(vector, hidden_dim, input_dim)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None
