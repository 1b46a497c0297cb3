"""Segment anomaly detector: a small attention MLP with handwritten gradients.

Architecture, for input dimension d:

    layer 1: backbone affine d -> 512 + ReLU, attention affine d -> 512 + softmax
    layer 2: backbone affine 512 -> 32 + ReLU, attention affine 512 -> 32 + softmax
    head:    affine 32 -> 1 + sigmoid

Within each layer the attention softmax runs over the feature axis ("fd"
modes) or over the batch axis ("bd" modes), and the attended backbone output
either adds back the backbone ("residual" modes) or replaces it
("multiplicative" modes). Dropout follows each layer's combined output during
training only, with inverted scaling so inference needs no correction.

Training is plain SGD on mean binary cross-entropy plus an L2 penalty on the
affine weight matrices (biases excluded). All gradients are written out by
hand and validated against central finite differences by
:func:`gradient_check`.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataInvariantError, DimensionMismatchError, MalformedHeaderError
from .features import FeatureBundle
from .fpl import FineLabels
from .seeding import derive_seed

HIDDEN1 = 512
HIDDEN2 = 32
SCORE_CLAMP = 1e-7

ATTENTION_MODES = (
    "residual_fd",
    "multiplicative_fd",
    "residual_bd",
    "multiplicative_bd",
)

_PARAM_NAMES = ("w1", "b1", "a1", "c1", "w2", "b2", "a2", "c2", "w3", "b3")
_WEIGHT_NAMES = ("w1", "a1", "w2", "a2", "w3")  # carry the L2 penalty


@dataclass
class DetectorModel:
    w1: np.ndarray  # (512, d) backbone layer 1
    b1: np.ndarray  # (512,)
    a1: np.ndarray  # (512, d) attention layer 1
    c1: np.ndarray  # (512,)
    w2: np.ndarray  # (32, 512)
    b2: np.ndarray  # (32,)
    a2: np.ndarray  # (32, 512)
    c2: np.ndarray  # (32,)
    w3: np.ndarray  # (1, 32) head
    b3: np.ndarray  # (1,)
    attention_mode: str = "residual_fd"
    dropout_rate: float = 0.6

    @property
    def d(self) -> int:
        return int(self.w1.shape[1])

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 0.01
    l2_lambda: float = 1e-3
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "l2_lambda": self.l2_lambda,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f: payload[f] for f in payload if f in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class TrainReport:
    epoch_losses: list[float]
    model: DetectorModel
    epoch_seconds: list[float]
    warnings: list[str] = field(default_factory=list)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=axis, keepdims=True)


def init_model(
    d: int,
    attention_mode: str = "residual_fd",
    dropout_rate: float = 0.6,
    seed: int = 0,
) -> DetectorModel:
    """Fresh model with uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    if attention_mode not in ATTENTION_MODES:
        raise ValueError(
            f"unknown attention mode {attention_mode!r}, expected one of {ATTENTION_MODES}"
        )
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    rng = np.random.default_rng(seed)

    def uniform(fan_out: int, fan_in: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    return DetectorModel(
        w1=uniform(HIDDEN1, d),
        b1=np.zeros(HIDDEN1),
        a1=uniform(HIDDEN1, d),
        c1=np.zeros(HIDDEN1),
        w2=uniform(HIDDEN2, HIDDEN1),
        b2=np.zeros(HIDDEN2),
        a2=uniform(HIDDEN2, HIDDEN1),
        c2=np.zeros(HIDDEN2),
        w3=uniform(1, HIDDEN2),
        b3=np.zeros(1),
        attention_mode=attention_mode,
        dropout_rate=dropout_rate,
    )


def _attention_axis(mode: str) -> int:
    return 1 if mode.endswith("_fd") else 0


def _forward_pass(
    model: DetectorModel, batch: np.ndarray, training: bool, seed: int
) -> dict:
    """Run the network and keep every intermediate needed for the backward pass."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.d:
        raise DimensionMismatchError(
            f"batch has shape {x.shape}, expected (B, {model.d})"
        )
    if model.attention_mode not in ATTENTION_MODES:
        raise ValueError(f"unknown attention mode {model.attention_mode!r}")
    axis = _attention_axis(model.attention_mode)
    residual = model.attention_mode.startswith("residual")
    rng = np.random.default_rng(seed) if training else None

    def dropout_mask(shape: tuple[int, ...]) -> np.ndarray | None:
        if not training or model.dropout_rate == 0.0:
            return None
        keep = 1.0 - model.dropout_rate
        return (rng.random(shape) >= model.dropout_rate) / keep

    cache: dict = {"x": x, "axis": axis, "residual": residual}

    pre1 = x @ model.w1.T + model.b1
    h1 = np.maximum(pre1, 0.0)
    att_pre1 = x @ model.a1.T + model.c1
    att1 = _softmax(att_pre1, axis=axis)
    z1 = h1 * att1 + h1 if residual else h1 * att1
    mask1 = dropout_mask(z1.shape)
    out1 = z1 * mask1 if mask1 is not None else z1

    pre2 = out1 @ model.w2.T + model.b2
    h2 = np.maximum(pre2, 0.0)
    att_pre2 = out1 @ model.a2.T + model.c2
    att2 = _softmax(att_pre2, axis=axis)
    z2 = h2 * att2 + h2 if residual else h2 * att2
    mask2 = dropout_mask(z2.shape)
    out2 = z2 * mask2 if mask2 is not None else z2

    logits = (out2 @ model.w3.T + model.b3)[:, 0]
    scores = _sigmoid(logits)

    cache.update(
        pre1=pre1, h1=h1, att1=att1, mask1=mask1, out1=out1,
        pre2=pre2, h2=h2, att2=att2, mask2=mask2, out2=out2,
        scores=scores,
    )
    return cache


def forward(
    model: DetectorModel, batch: np.ndarray, training: bool = False, seed: int = 0
) -> np.ndarray:
    """Per-segment anomaly scores in (0, 1) for a (B, d) batch.

    ``seed`` only matters when ``training`` is true (it draws the dropout
    masks); inference is deterministic and batch rows are independent in the
    "fd" modes.
    """
    return _forward_pass(model, batch, training, seed)["scores"]


def loss(
    scores: np.ndarray,
    labels: np.ndarray,
    model: DetectorModel,
    l2_lambda: float,
) -> float:
    """Mean binary cross-entropy plus L2 on the affine weight matrices."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise DataInvariantError(
            f"scores shape {scores.shape} does not match labels shape {labels.shape}"
        )
    s = np.clip(scores, SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    bce = -np.mean(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s))
    penalty = sum(float((getattr(model, n) ** 2).sum()) for n in _WEIGHT_NAMES)
    return float(bce + l2_lambda * penalty)


def _softmax_backward(att: np.ndarray, grad_att: np.ndarray, axis: int) -> np.ndarray:
    inner = (grad_att * att).sum(axis=axis, keepdims=True)
    return att * (grad_att - inner)


def loss_gradients(
    model: DetectorModel,
    batch: np.ndarray,
    labels: np.ndarray,
    l2_lambda: float,
    training: bool = False,
    seed: int = 0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss value and its gradient with respect to every parameter.

    The backward pass mirrors :func:`_forward_pass` step by step; dropout
    masks drawn in the forward pass are reused on the way back.
    """
    cache = _forward_pass(model, batch, training, seed)
    y = np.asarray(labels, dtype=np.float64)
    scores = cache["scores"]
    if scores.shape != y.shape:
        raise DataInvariantError(
            f"scores shape {scores.shape} does not match labels shape {y.shape}"
        )
    n = y.shape[0]
    value = loss(scores, y, model, l2_lambda)

    axis = cache["axis"]
    residual = cache["residual"]
    grads: dict[str, np.ndarray] = {}

    d_logits = (scores - y) / n  # (B,)
    grads["w3"] = d_logits[None, :] @ cache["out2"] + 2.0 * l2_lambda * model.w3
    grads["b3"] = np.array([d_logits.sum()])
    d_out2 = d_logits[:, None] @ model.w3  # (B, 32)

    d_z2 = d_out2 * cache["mask2"] if cache["mask2"] is not None else d_out2
    d_h2 = d_z2 * cache["att2"] + d_z2 if residual else d_z2 * cache["att2"]
    d_att2 = d_z2 * cache["h2"]
    d_pre2 = d_h2 * (cache["pre2"] > 0.0)
    d_att_pre2 = _softmax_backward(cache["att2"], d_att2, axis)
    grads["w2"] = d_pre2.T @ cache["out1"] + 2.0 * l2_lambda * model.w2
    grads["b2"] = d_pre2.sum(axis=0)
    grads["a2"] = d_att_pre2.T @ cache["out1"] + 2.0 * l2_lambda * model.a2
    grads["c2"] = d_att_pre2.sum(axis=0)
    d_out1 = d_pre2 @ model.w2 + d_att_pre2 @ model.a2

    d_z1 = d_out1 * cache["mask1"] if cache["mask1"] is not None else d_out1
    d_h1 = d_z1 * cache["att1"] + d_z1 if residual else d_z1 * cache["att1"]
    d_att1 = d_z1 * cache["h1"]
    d_pre1 = d_h1 * (cache["pre1"] > 0.0)
    d_att_pre1 = _softmax_backward(cache["att1"], d_att1, axis)
    grads["w1"] = d_pre1.T @ cache["x"] + 2.0 * l2_lambda * model.w1
    grads["b1"] = d_pre1.sum(axis=0)
    grads["a1"] = d_att_pre1.T @ cache["x"] + 2.0 * l2_lambda * model.a1
    grads["c1"] = d_att_pre1.sum(axis=0)

    return value, grads


def _flatten_training_set(
    bundle: FeatureBundle, fine: FineLabels
) -> tuple[np.ndarray, np.ndarray]:
    """All segments in bundle order with their fine labels."""
    feats = []
    labs = []
    for video in bundle.videos:
        segs = fine.segment_labels.get(video.video_id)
        if segs is None:
            raise DataInvariantError(
                f"video {video.video_id!r} has no fine labels"
            )
        if len(segs) != video.num_segments:
            raise DataInvariantError(
                f"video {video.video_id!r} has {video.num_segments} segments "
                f"but {len(segs)} fine labels"
            )
        feats.append(video.features.astype(np.float64, copy=False))
        labs.append(np.asarray(segs, dtype=np.float64))
    return np.concatenate(feats, axis=0), np.concatenate(labs)


def train(
    bundle: FeatureBundle,
    fine: FineLabels,
    config: TrainConfig,
    attention_mode: str = "residual_fd",
    dropout_rate: float = 0.6,
) -> TrainReport:
    """SGD over all labelled segments.

    Each epoch reshuffles with a seed derived from (config.seed, epoch); the
    final short batch is kept. The per-epoch loss is the sample-weighted mean
    of the batch losses. Deterministic for a given config and input.
    """
    if config.epochs < 0 or config.batch_size < 1 or config.learning_rate <= 0:
        raise ValueError(f"invalid training configuration: {config}")
    x, y = _flatten_training_set(bundle, fine)
    warnings: list[str] = []
    if y.min() == y.max():
        warnings.append(
            f"all {len(y)} training segments carry label {int(y[0])}; "
            "the detector will learn a constant"
        )

    model = init_model(
        bundle.d, attention_mode, dropout_rate, seed=derive_seed(config.seed, "init")
    )
    total = x.shape[0]
    epoch_losses: list[float] = []
    epoch_seconds: list[float] = []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = np.random.default_rng(
            derive_seed(config.seed, "shuffle", epoch)
        ).permutation(total)
        running = 0.0
        for batch_index, lo in enumerate(range(0, total, config.batch_size)):
            take = order[lo : lo + config.batch_size]
            value, grads = loss_gradients(
                model,
                x[take],
                y[take],
                config.l2_lambda,
                training=True,
                seed=derive_seed(config.seed, "dropout", epoch, batch_index),
            )
            for name in _PARAM_NAMES:
                getattr(model, name)[...] -= config.learning_rate * grads[name]
            running += value * len(take)
        epoch_losses.append(running / total)
        epoch_seconds.append(time.perf_counter() - started)
    return TrainReport(
        epoch_losses=epoch_losses,
        model=model,
        epoch_seconds=epoch_seconds,
        warnings=warnings,
    )


def gradient_check(
    model: DetectorModel,
    batch: np.ndarray,
    labels: np.ndarray,
    epsilon: float = 1e-5,
    l2_lambda: float = 1e-3,
    num_params: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout is off (training=False). ``num_params`` coordinates are sampled
    uniformly across all parameter tensors; each is nudged by +-epsilon and
    the numeric slope is compared against the analytic gradient.
    """
    if not 1e-7 < epsilon < 1e-3:
        raise ValueError(f"epsilon must be in (1e-7, 1e-3), got {epsilon}")
    _, grads = loss_gradients(model, batch, labels, l2_lambda, training=False)

    tensors = [(name, getattr(model, name)) for name in _PARAM_NAMES]
    sizes = np.array([t.size for _, t in tensors])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    picks = (
        rng.choice(total, size=min(num_params, total), replace=False)
        if num_params < total
        else np.arange(total)
    )

    worst = 0.0
    for flat in picks:
        slot = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, tensor = tensors[slot]
        index = np.unravel_index(int(flat - offsets[slot]), tensor.shape)
        original = tensor[index]
        tensor[index] = original + epsilon
        plus = loss(forward(model, batch, training=False), labels, model, l2_lambda)
        tensor[index] = original - epsilon
        minus = loss(forward(model, batch, training=False), labels, model, l2_lambda)
        tensor[index] = original
        numeric = (plus - minus) / (2.0 * epsilon)
        analytic = float(grads[name][index])
        scale = max(abs(numeric), abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst


# --- checkpoint format ------------------------------------------------------
#
#   magic            4 bytes  b"C2FD"
#   version          u32      currently 1
#   d, h1, h2        u32 each
#   mode length      u16, then the UTF-8 attention mode
#   dropout_rate     f64
#   epochs, batch    u32 each
#   learning_rate    f64
#   l2_lambda        f64
#   seed             i64
#   tensors          raw little-endian f64, C order, in _PARAM_NAMES order
#
# Weights round-trip exactly because they are stored at full precision.

CHECKPOINT_MAGIC = b"C2FD"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIII")
_CKPT_MODE_LEN = struct.Struct("<H")
_CKPT_TRAIN = struct.Struct("<dIIddq")


def save_model(model: DetectorModel, config: TrainConfig, path: str | Path) -> None:
    """Write a byte-deterministic checkpoint of the model and its train config."""
    h1 = model.w1.shape[0]
    h2 = model.w2.shape[0]
    mode_bytes = model.attention_mode.encode("utf-8")
    parts = [
        _CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model.d, h1, h2),
        _CKPT_MODE_LEN.pack(len(mode_bytes)),
        mode_bytes,
        _CKPT_TRAIN.pack(
            model.dropout_rate,
            config.epochs,
            config.batch_size,
            config.learning_rate,
            config.l2_lambda,
            config.seed,
        ),
    ]
    for name in _PARAM_NAMES:
        parts.append(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path: str | Path) -> tuple[DetectorModel, TrainConfig]:
    """Read a checkpoint written by :func:`save_model`. Exact round trip."""
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise MalformedHeaderError(f"{path}: file shorter than the checkpoint header")
    magic, version, d, h1, h2 = _CKPT_HEADER.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise MalformedHeaderError(
            f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}"
        )
    if version != CHECKPOINT_VERSION:
        raise MalformedHeaderError(f"{path}: unsupported checkpoint version {version}")
    offset = _CKPT_HEADER.size
    if offset + _CKPT_MODE_LEN.size > len(raw):
        raise MalformedHeaderError(f"{path}: truncated checkpoint")
    (mode_len,) = _CKPT_MODE_LEN.unpack_from(raw, offset)
    offset += _CKPT_MODE_LEN.size
    if offset + mode_len + _CKPT_TRAIN.size > len(raw):
        raise MalformedHeaderError(f"{path}: truncated checkpoint")
    mode = raw[offset : offset + mode_len].decode("utf-8")
    offset += mode_len
    if mode not in ATTENTION_MODES:
        raise MalformedHeaderError(f"{path}: unknown attention mode {mode!r}")
    dropout_rate, epochs, batch_size, lr, l2, seed = _CKPT_TRAIN.unpack_from(raw, offset)
    offset += _CKPT_TRAIN.size

    shapes = {
        "w1": (h1, d), "b1": (h1,), "a1": (h1, d), "c1": (h1,),
        "w2": (h2, h1), "b2": (h2,), "a2": (h2, h1), "c2": (h2,),
        "w3": (1, h2), "b3": (1,),
    }
    arrays = {}
    for name in _PARAM_NAMES:
        shape = shapes[name]
        count = int(np.prod(shape))
        block = count * 8
        if offset + block > len(raw):
            raise MalformedHeaderError(f"{path}: checkpoint tensor {name!r} truncated")
        arrays[name] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += block
    if offset != len(raw):
        raise MalformedHeaderError(
            f"{path}: {len(raw) - offset} unexpected trailing bytes"
        )
    model = DetectorModel(attention_mode=mode, dropout_rate=dropout_rate, **arrays)
    config = TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=lr,
        l2_lambda=l2,
        seed=seed,
    )
    return model, config
