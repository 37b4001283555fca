# =============================================================================
# 🧠 Feature Extractor + Classifier (utils/model.py)
# -----------------------------------------------------------------------------
# Purpose:             MLP feature extractor f and weight-normalized classifier g with analytic backprop
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-15
# Last Updated:        2026-10-12
#
# Description:
#   Holds the trainable network as plain numpy arrays: a stack of dense layers (optional batch
#   norm, ReLU on hidden layers, none on the bottleneck) producing features z, followed by a
#   weight-normalized linear classifier producing logits and probabilities p = softmax(g(z)).
#   Provides forward (train/eval), backward from dL/dp to every parameter, the label-smoothed
#   source cross-entropy, seeded initialization and the "NRCM" checkpoint format.
#
# File Location:        /utils/model.py
# Called By:            utils/banks.py, utils/trainer.py, utils/diagnostics.py, tools/*
# Int. Dependencies:    utils/numerics, utils/shared/nrc_exceptions
# Ext. Dependencies:    numpy, struct, copy, dataclasses, typing
#
# Notes:
#   - The default architecture is hidden linear -> BN -> ReLU -> bottleneck linear -> BN -> WN classifier.
#   - The last extractor layer and the classifier form the "head" parameter group.
#   - Batch-norm running statistics are buffers: saved in checkpoints, never trained.
# =============================================================================

__all__ = [
    "ModelConfig",
    "BatchNormState",
    "DenseLayer",
    "WeightNormClassifier",
    "ModelParams",
    "ForwardCache",
    "init_params",
    "forward",
    "predict",
    "backward",
    "source_pretrain_loss",
    "parameter_group",
    "save_checkpoint",
    "load_checkpoint",
]

import copy
import math
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from utils.numerics import EPS, LOG_FLOOR, as_matrix, softmax_rows
from utils.shared.nrc_exceptions import (
    CheckpointFormatError,
    ConfigValidationError,
    InvalidInputError,
)

CHECKPOINT_MAGIC = b"NRCM"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    """Architecture settings (the ``model`` config section)."""
    hidden_dims: List[int] = field(default_factory=lambda: [64])
    feature_dim: int = 32
    batch_norm: bool = True
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    init_scale: float = 1.0

    def __post_init__(self):
        self.hidden_dims = [int(h) for h in self.hidden_dims]
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigValidationError("model.hidden_dims entries must be >= 1", invalid_keys=["model.hidden_dims"])
        if self.feature_dim < 1:
            raise ConfigValidationError("model.feature_dim must be >= 1", invalid_keys=["model.feature_dim"])
        if not 0.0 <= self.bn_momentum <= 1.0:
            raise ConfigValidationError("model.bn_momentum must lie in [0, 1]", invalid_keys=["model.bn_momentum"])
        if self.bn_eps <= 0:
            raise ConfigValidationError("model.bn_eps must be positive", invalid_keys=["model.bn_eps"])
        if self.init_scale <= 0:
            raise ConfigValidationError("model.init_scale must be positive", invalid_keys=["model.init_scale"])

    @classmethod
    def from_mapping(cls, values: Optional[dict]) -> "ModelConfig":
        values = dict(values or {})
        known = {k: values[k] for k in cls.__dataclass_fields__ if k in values}
        return cls(**known)

    @classmethod
    def from_config(cls, cfg) -> "ModelConfig":
        return cls.from_mapping(cfg.get("model", {}))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class DenseLayer:
    """One extractor layer: ``a = h W + b``, optional batch norm, optional ReLU."""
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray
    batch_norm: Optional[BatchNormState] = None
    relu: bool = False

    @property
    def fan_in(self) -> int:
        return int(self.weight.shape[0])

    @property
    def fan_out(self) -> int:
        return int(self.weight.shape[1])


@dataclass
class WeightNormClassifier:
    """
    Linear classifier with weight normalization: row c of the effective weight is
    ``magnitude[c] * direction[c] / |direction[c]|``.
    """
    direction: np.ndarray  # (C, d_z)
    magnitude: np.ndarray  # (C,)
    bias: np.ndarray       # (C,)

    def effective_weight(self) -> np.ndarray:
        norms = np.maximum(np.linalg.norm(self.direction, axis=1, keepdims=True), EPS)
        return self.magnitude[:, None] * self.direction / norms

    def apply(self) -> np.ndarray:
        """
        Rescale every direction row to unit L2 norm (effective weights unchanged) and return
        the effective weight matrix. Idempotent.
        """
        norms = np.maximum(np.linalg.norm(self.direction, axis=1, keepdims=True), EPS)
        self.direction /= norms
        return self.effective_weight()


@dataclass
class ModelParams:
    extractor: List[DenseLayer]
    classifier: WeightNormClassifier
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if not self.extractor:
            raise InvalidInputError("model needs at least one extractor layer")
        if self.num_classes < 2:
            raise InvalidInputError(f"model needs C >= 2 classes, got {self.num_classes}")
        for prev, nxt in zip(self.extractor, self.extractor[1:]):
            if prev.fan_out != nxt.fan_in:
                raise InvalidInputError(f"layer width mismatch: {prev.fan_out} -> {nxt.fan_in}")
        if self.classifier.direction.shape[1] != self.feature_dim:
            raise InvalidInputError("classifier input width must equal the feature dimension")

    @property
    def input_dim(self) -> int:
        return self.extractor[0].fan_in

    @property
    def feature_dim(self) -> int:
        return self.extractor[-1].fan_out

    @property
    def num_classes(self) -> int:
        return int(self.classifier.direction.shape[0])

    def named_parameters(self) -> Dict[str, np.ndarray]:
        """Trainable arrays in declaration order (references, not copies)."""
        out: Dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.extractor):
            out[f"extractor.{i}.weight"] = layer.weight
            out[f"extractor.{i}.bias"] = layer.bias
            if layer.batch_norm is not None:
                out[f"extractor.{i}.bn.gamma"] = layer.batch_norm.gamma
                out[f"extractor.{i}.bn.beta"] = layer.batch_norm.beta
        out["classifier.direction"] = self.classifier.direction
        out["classifier.magnitude"] = self.classifier.magnitude
        out["classifier.bias"] = self.classifier.bias
        return out

    def state_arrays(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Every array (parameters and running statistics) in checkpoint order."""
        for i, layer in enumerate(self.extractor):
            yield f"extractor.{i}.weight", layer.weight
            yield f"extractor.{i}.bias", layer.bias
            if layer.batch_norm is not None:
                bn = layer.batch_norm
                yield f"extractor.{i}.bn.gamma", bn.gamma
                yield f"extractor.{i}.bn.beta", bn.beta
                yield f"extractor.{i}.bn.running_mean", bn.running_mean
                yield f"extractor.{i}.bn.running_var", bn.running_var
        yield "classifier.direction", self.classifier.direction
        yield "classifier.magnitude", self.classifier.magnitude
        yield "classifier.bias", self.classifier.bias

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(arr)) for _, arr in self.state_arrays())


def parameter_group(name: str, num_layers: int) -> str:
    """
    Map a parameter name to its learning-rate group.

    The bottleneck (last extractor layer) and the classifier are the "head"; earlier extractor
    layers are the "backbone".
    """
    if name.startswith("classifier."):
        return "head"
    layer_index = int(name.split(".")[1])
    return "head" if layer_index == num_layers - 1 else "backbone"


def init_params(input_dim: int, num_classes: int, config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """
    Seeded He-style initialization of the default architecture.

    Args:
        input_dim: d_in.
        num_classes: C (>= 2).
        config: Architecture settings.
        rng: Generator that fully determines the initial weights.

    Returns:
        ModelParams: Fresh parameters.
    """
    if input_dim < 1:
        raise InvalidInputError(f"input_dim must be >= 1, got {input_dim}")
    if num_classes < 2:
        raise InvalidInputError(f"num_classes must be >= 2, got {num_classes}")

    widths = [input_dim] + list(config.hidden_dims) + [config.feature_dim]
    layers: List[DenseLayer] = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        is_hidden = i < len(widths) - 2
        std = config.init_scale * np.sqrt(2.0 / fan_in)
        bn = None
        if config.batch_norm:
            bn = BatchNormState(
                gamma=np.ones(fan_out),
                beta=np.zeros(fan_out),
                running_mean=np.zeros(fan_out),
                running_var=np.ones(fan_out),
            )
        layers.append(DenseLayer(
            weight=rng.normal(0.0, std, size=(fan_in, fan_out)),
            bias=np.zeros(fan_out),
            batch_norm=bn,
            relu=is_hidden,
        ))

    w0 = rng.normal(0.0, config.init_scale * np.sqrt(1.0 / config.feature_dim),
                    size=(num_classes, config.feature_dim))
    classifier = WeightNormClassifier(
        direction=w0,
        magnitude=np.linalg.norm(w0, axis=1),
        bias=np.zeros(num_classes),
    )
    return ModelParams(extractor=layers, classifier=classifier,
                       bn_momentum=config.bn_momentum, bn_eps=config.bn_eps)


@dataclass
class LayerCache:
    inputs: np.ndarray
    pre_activation: np.ndarray
    xhat: Optional[np.ndarray] = None
    inv_std: Optional[np.ndarray] = None
    batch_mean: Optional[np.ndarray] = None
    batch_var: Optional[np.ndarray] = None
    relu_mask: Optional[np.ndarray] = None


@dataclass
class ForwardCache:
    """Everything backward() needs; probability rows sum to 1."""
    params: ModelParams
    mode: str
    layers: List[LayerCache]
    z: np.ndarray
    effective_weight: np.ndarray
    logits: np.ndarray
    p: np.ndarray


def forward(params: ModelParams, x, mode: str = "eval",
            update_running_stats: bool = True) -> Tuple[np.ndarray, np.ndarray, ForwardCache]:
    """
    Run the network on a batch.

    Args:
        params: Model parameters. In train mode with batch norm, running statistics are updated
            in place unless ``update_running_stats`` is False.
        x: (n, d_in) batch.
        mode: "train" (batch statistics) or "eval" (running statistics).
        update_running_stats: Set False to leave buffers untouched in train mode.

    Returns:
        (z, p, cache): features (n, d_z), probabilities (n, C) and the backprop cache.

    Raises:
        InvalidInputError: On dimension mismatch, unknown mode, or a train-mode batch smaller
            than 2 when batch norm is enabled.
    """
    if mode not in ("train", "eval"):
        raise InvalidInputError(f"mode must be 'train' or 'eval', got {mode!r}")
    h = as_matrix(x, "x")
    if h.shape[1] != params.input_dim:
        raise InvalidInputError(f"x has {h.shape[1]} columns, model expects {params.input_dim}")
    n = h.shape[0]
    uses_bn = any(layer.batch_norm is not None for layer in params.extractor)
    if mode == "train" and uses_bn and n < 2:
        raise InvalidInputError("train-mode batch norm needs a batch of at least 2 samples")

    caches: List[LayerCache] = []
    for layer in params.extractor:
        a = h @ layer.weight + layer.bias
        lc = LayerCache(inputs=h, pre_activation=a)
        out = a
        bn = layer.batch_norm
        if bn is not None:
            if mode == "train":
                mean = a.mean(axis=0)
                var = a.var(axis=0)
                if update_running_stats:
                    m = params.bn_momentum
                    unbiased = var * n / (n - 1)
                    bn.running_mean[...] = (1.0 - m) * bn.running_mean + m * mean
                    bn.running_var[...] = (1.0 - m) * bn.running_var + m * unbiased
                lc.batch_mean, lc.batch_var = mean, var
            else:
                mean, var = bn.running_mean, bn.running_var
            lc.inv_std = 1.0 / np.sqrt(var + params.bn_eps)
            lc.xhat = (a - mean) * lc.inv_std
            out = bn.gamma * lc.xhat + bn.beta
        if layer.relu:
            lc.relu_mask = out > 0
            out = out * lc.relu_mask
        caches.append(lc)
        h = out

    z = h
    w_eff = params.classifier.effective_weight()
    logits = z @ w_eff.T + params.classifier.bias
    p = softmax_rows(logits)
    cache = ForwardCache(params=params, mode=mode, layers=caches, z=z,
                         effective_weight=w_eff, logits=logits, p=p)
    return z, p, cache


def predict(params: ModelParams, x) -> Tuple[np.ndarray, np.ndarray]:
    """Eval-mode forward returning (z, p) only."""
    z, p, _ = forward(params, x, mode="eval")
    return z, p


def backward(cache: ForwardCache, dL_dp) -> Dict[str, np.ndarray]:
    """
    Backpropagate dL/dp through softmax, weight norm, batch norm and every dense layer.

    Args:
        cache: ForwardCache produced by forward().
        dL_dp: (n, C) upstream gradient with respect to the probabilities.

    Returns:
        dict: Gradient for every entry of ``params.named_parameters()`` (same keys, same shapes).
    """
    g_p = as_matrix(dL_dp, "dL_dp")
    if g_p.shape != cache.p.shape:
        raise InvalidInputError(f"dL_dp shape {g_p.shape} does not match p shape {cache.p.shape}")
    params = cache.params
    p = cache.p
    n = p.shape[0]
    grads: Dict[str, np.ndarray] = {}

    # softmax Jacobian-vector product
    d_logits = p * (g_p - np.sum(g_p * p, axis=1, keepdims=True))

    clf = params.classifier
    d_w_eff = d_logits.T @ cache.z
    grads_clf_bias = d_logits.sum(axis=0)
    dz = d_logits @ cache.effective_weight

    norms = np.maximum(np.linalg.norm(clf.direction, axis=1, keepdims=True), EPS)
    v_hat = clf.direction / norms
    proj = np.sum(d_w_eff * v_hat, axis=1)
    grads_magnitude = proj
    grads_direction = (clf.magnitude[:, None] / norms) * (d_w_eff - proj[:, None] * v_hat)

    d = dz
    layer_grads: List[Tuple[int, Dict[str, np.ndarray]]] = []
    for i in range(len(params.extractor) - 1, -1, -1):
        layer = params.extractor[i]
        lc = cache.layers[i]
        lg: Dict[str, np.ndarray] = {}
        if layer.relu:
            d = d * lc.relu_mask
        bn = layer.batch_norm
        if bn is not None:
            lg["bn.gamma"] = np.sum(d * lc.xhat, axis=0)
            lg["bn.beta"] = d.sum(axis=0)
            d_xhat = d * bn.gamma
            if cache.mode == "train":
                d = (lc.inv_std / n) * (n * d_xhat - d_xhat.sum(axis=0)
                                        - lc.xhat * np.sum(d_xhat * lc.xhat, axis=0))
            else:
                d = d_xhat * lc.inv_std
        lg["weight"] = lc.inputs.T @ d
        lg["bias"] = d.sum(axis=0)
        d = d @ layer.weight.T
        layer_grads.append((i, lg))

    for i, lg in sorted(layer_grads, key=lambda item: item[0]):
        grads[f"extractor.{i}.weight"] = lg["weight"]
        grads[f"extractor.{i}.bias"] = lg["bias"]
        if "bn.gamma" in lg:
            grads[f"extractor.{i}.bn.gamma"] = lg["bn.gamma"]
            grads[f"extractor.{i}.bn.beta"] = lg["bn.beta"]
    grads["classifier.direction"] = grads_direction
    grads["classifier.magnitude"] = grads_magnitude
    grads["classifier.bias"] = grads_clf_bias
    return grads


def source_pretrain_loss(p, labels, smoothing: float = 0.1) -> Tuple[float, np.ndarray]:
    """
    Label-smoothed cross-entropy, averaged over the batch.

    The target puts ``1 - smoothing`` on the true class and ``smoothing / (C - 1)`` on every
    other class. Probabilities are floored at LOG_FLOOR inside the log.

    Args:
        p: (n, C) probabilities.
        labels: (n,) integer class indices in [0, C).
        smoothing: Value in [0, 1).

    Returns:
        (loss, dL_dp): scalar loss and its gradient with respect to p.
    """
    probs = as_matrix(p, "p")
    y = np.asarray(labels)
    n, num_classes = probs.shape
    if y.shape != (n,):
        raise InvalidInputError(f"labels must have shape ({n},), got {y.shape}")
    if not 0.0 <= smoothing < 1.0:
        raise InvalidInputError(f"smoothing must lie in [0, 1), got {smoothing}")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise InvalidInputError(f"labels must lie in [0, {num_classes}), got range [{y.min()}, {y.max()}]")
    y = y.astype(np.int64)

    targets = np.full((n, num_classes), smoothing / (num_classes - 1))
    targets[np.arange(n), y] = 1.0 - smoothing
    clamped = np.maximum(probs, LOG_FLOOR)
    loss = float(-np.sum(targets * np.log(clamped)) / n)
    grad = np.where(probs > LOG_FLOOR, -targets / clamped, 0.0) / n
    return loss, grad


# --- NRCM checkpoint format -------------------------------------------------

def save_checkpoint(params: ModelParams, path: Union[str, Path]) -> Path:
    """
    Write parameters as an "NRCM" file.

    Layout (little-endian): magic "NRCM", u32 version, u32 d_in, u32 d_z, u32 C, u32 n_layers,
    f64 bn_momentum, f64 bn_eps, per layer (u32 fan_in, u32 fan_out, u8 has_bn, u8 relu), then
    every array of ``state_arrays()`` as raw f64 in declaration order.
    """
    path = Path(path)
    chunks = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<IIII", params.input_dim, params.feature_dim, params.num_classes, len(params.extractor)),
        struct.pack("<dd", params.bn_momentum, params.bn_eps),
    ]
    for layer in params.extractor:
        chunks.append(struct.pack("<IIBB", layer.fan_in, layer.fan_out,
                                  int(layer.batch_norm is not None), int(layer.relu)))
    for _, arr in params.state_arrays():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    return path


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.data):
            raise CheckpointFormatError(f"truncated checkpoint while reading {what}", offset=self.pos, path=self.path)
        out = self.data[self.pos:self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, shape: Tuple[int, ...], what: str) -> np.ndarray:
        count = math.prod(int(s) for s in shape)
        remaining = len(self.data) - self.pos
        if count * 8 > remaining:
            raise CheckpointFormatError(
                f"dimensions {tuple(shape)} of {what} need {count * 8} bytes, {remaining} left",
                offset=self.pos, path=self.path)
        raw = self.take(count * 8, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def load_checkpoint(path: Union[str, Path]) -> ModelParams:
    """
    Read an "NRCM" checkpoint written by save_checkpoint().

    Raises:
        CheckpointFormatError: Bad magic, unsupported version, truncation or trailing bytes.
        FileNotFoundError: If the file does not exist.
    """
    path = Path(path)
    r = _Reader(path.read_bytes(), str(path))
    magic = r.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", offset=0, path=str(path))
    (version,) = r.unpack("<I", "version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}", offset=4, path=str(path))
    d_in, d_z, num_classes, n_layers = r.unpack("<IIII", "dims")
    bn_momentum, bn_eps = r.unpack("<dd", "batch-norm settings")
    specs = [r.unpack("<IIBB", f"layer {i} header") for i in range(n_layers)]

    layers: List[DenseLayer] = []
    for i, (fan_in, fan_out, has_bn, relu) in enumerate(specs):
        weight = r.array((fan_in, fan_out), f"extractor.{i}.weight")
        bias = r.array((fan_out,), f"extractor.{i}.bias")
        bn = None
        if has_bn:
            bn = BatchNormState(
                gamma=r.array((fan_out,), f"extractor.{i}.bn.gamma"),
                beta=r.array((fan_out,), f"extractor.{i}.bn.beta"),
                running_mean=r.array((fan_out,), f"extractor.{i}.bn.running_mean"),
                running_var=r.array((fan_out,), f"extractor.{i}.bn.running_var"),
            )
        layers.append(DenseLayer(weight=weight, bias=bias, batch_norm=bn, relu=bool(relu)))
    classifier = WeightNormClassifier(
        direction=r.array((num_classes, d_z), "classifier.direction"),
        magnitude=r.array((num_classes,), "classifier.magnitude"),
        bias=r.array((num_classes,), "classifier.bias"),
    )
    if r.pos != len(r.data):
        raise CheckpointFormatError(f"{len(r.data) - r.pos} trailing bytes after parameter blocks",
                                    offset=r.pos, path=str(path))
    try:
        params = ModelParams(extractor=layers, classifier=classifier, bn_momentum=bn_momentum, bn_eps=bn_eps)
    except InvalidInputError as e:
        raise CheckpointFormatError(f"inconsistent checkpoint dimensions: {e}", path=str(path)) from e
    if params.input_dim != d_in or params.feature_dim != d_z:
        raise CheckpointFormatError("header dimensions disagree with layer shapes", path=str(path))
    if not params.is_finite():
        raise CheckpointFormatError("checkpoint contains non-finite parameters", path=str(path))
    return params
