"""Minimal dense-network engine: forward/backward, Adam, losses, TSNN files.

Powers the adapter, discriminator, task classifier, and patient identifier.
Parameters and activations are float32 by default (matching the TSNN file
format); loss reductions accumulate in float64. Batch-first layout: inputs
are (n, d), weights (d_in, d_out).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import (
    ConfigurationError,
    MagicError,
    NumericError,
    ShapeError,
    StateError,
    TruncatedFileError,
    VersionError,
)
from .fileio import atomic_write_bytes
from .seeding import derive_rng

NET_MAGIC = b"TSNN"
NET_FORMAT_VERSION = 1
_ACT_CODES = {"linear": 0, "relu": 1, "tanh": 2}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray     # (out_dim,)
    activation: str

    def __post_init__(self):
        if self.activation not in _ACT_CODES:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"layer shapes {self.weights.shape}/{self.bias.shape} inconsistent")


class Network:
    """Ordered dense layers. ``version`` bumps on every parameter mutation so
    stale forward caches can be rejected."""

    def __init__(self, layers: Sequence[DenseLayer]):
        layers = list(layers)
        for prev, nxt in zip(layers, layers[1:]):
            if prev.weights.shape[1] != nxt.weights.shape[0]:
                raise ShapeError(
                    f"layer dims do not chain: {prev.weights.shape} -> "
                    f"{nxt.weights.shape}")
        self.layers = layers
        self.version = 0

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weights.shape[1]

    def parameters(self) -> List[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def copy(self) -> "Network":
        return Network([DenseLayer(l.weights.copy(), l.bias.copy(), l.activation)
                        for l in self.layers])

    def astype(self, dtype) -> "Network":
        return Network([DenseLayer(l.weights.astype(dtype), l.bias.astype(dtype),
                                   l.activation) for l in self.layers])

    def param_bytes(self) -> bytes:
        """Concatenated little-endian f32 bytes of all parameters."""
        return b"".join(p.astype("<f4").tobytes() for p in self.parameters())


def init_network(dims: Sequence[int], activations: Sequence[str], seed: int,
                 dtype=np.float32) -> Network:
    """He init for relu layers, Glorot for tanh/linear; biases zero."""
    if len(activations) != len(dims) - 1:
        raise ConfigurationError(
            f"{len(dims)} dims need {len(dims) - 1} activations, "
            f"got {len(activations)}")
    layers = []
    for i, act in enumerate(activations):
        fan_in, fan_out = dims[i], dims[i + 1]
        rng = derive_rng(seed, "layer", i)
        if act == "relu":
            std = np.sqrt(2.0 / fan_in)
        else:
            std = np.sqrt(2.0 / (fan_in + fan_out))
        weights = rng.normal(0.0, std, size=(fan_in, fan_out)).astype(dtype)
        bias = np.zeros(fan_out, dtype=dtype)
        layers.append(DenseLayer(weights, bias, act))
    return Network(layers)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    return z


@dataclass
class ForwardCache:
    net_id: int
    version: int
    inputs: List[np.ndarray]       # input to each layer
    activations: List[np.ndarray]  # output of each layer


def forward(net: Network, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(
            f"input shape {x.shape} does not match first layer "
            f"(expects (*, {net.in_dim}))")
    inputs, acts = [], []
    for layer in net.layers:
        inputs.append(x)
        z = x @ layer.weights + layer.bias
        x = _activate(z, layer.activation)
        acts.append(x)
    return x, ForwardCache(id(net), net.version, inputs, acts)


def backward(net: Network, cache: ForwardCache, dy: np.ndarray):
    """Gradients of sum(output * dy)-style objectives.

    Returns ([(dW, db) per layer], d_input).
    """
    if cache.net_id != id(net) or cache.version != net.version:
        raise StateError("forward cache is stale for this network")
    dy = np.asarray(dy)
    if dy.shape != cache.activations[-1].shape:
        raise ShapeError(
            f"output gradient shape {dy.shape} != output "
            f"{cache.activations[-1].shape}")
    grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        a = cache.activations[i]
        if layer.activation == "relu":
            dz = dy * (a > 0)
        elif layer.activation == "tanh":
            dz = dy * (1.0 - a * a)
        else:
            dz = dy
        grads[i] = (cache.inputs[i].T @ dz, dz.sum(axis=0))
        dy = dz @ layer.weights.T
    return grads, dy


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def init_adam(net: Network, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    if lr <= 0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}")
    params = net.parameters()
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                     m=[np.zeros_like(p) for p in params],
                     v=[np.zeros_like(p) for p in params])


def adam_step(state: AdamState, net: Network, grads) -> None:
    """Bias-corrected Adam update, in place. Raises on non-finite gradients."""
    flat = []
    for dW, db in grads:
        flat.extend([dW, db])
    params = net.parameters()
    if len(flat) != len(params):
        raise ShapeError("gradient list does not match network layers")
    for g, p in zip(flat, params):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient encountered")
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for g, p, m, v in zip(flat, params, state.m, state.v):
        g = g.astype(p.dtype, copy=False)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
    net.version += 1


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def mse(pred: np.ndarray, target) -> Tuple[float, np.ndarray]:
    """Mean squared difference over all elements; returns (loss, d/d_pred)."""
    pred = np.asarray(pred)
    target = np.broadcast_to(np.asarray(target, dtype=pred.dtype), pred.shape)
    diff = pred - target
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    grad = (2.0 / pred.size) * diff
    return loss, grad.astype(pred.dtype, copy=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, computed and normalized in float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_softmax(logits: np.ndarray, classes: np.ndarray):
    """Fused softmax cross-entropy, mean over the batch.

    Returns (loss, d/d_logits)."""
    logits = np.asarray(logits)
    classes = np.asarray(classes)
    if logits.ndim != 2 or classes.shape != (logits.shape[0],):
        raise ShapeError(
            f"logits {logits.shape} vs classes {classes.shape} mismatch")
    n, k = logits.shape
    if classes.min() < 0 or classes.max() >= k:
        raise ConfigurationError(
            f"class index outside [0, {k - 1}]: "
            f"[{classes.min()}, {classes.max()}]")
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(n), classes]))
    probs = softmax(logits)
    probs[np.arange(n), classes] -= 1.0
    grad = (probs / n).astype(logits.dtype, copy=False)
    return loss, grad


# ---------------------------------------------------------------------------
# "TSNN" model files
# ---------------------------------------------------------------------------

def network_to_bytes(net: Network) -> bytes:
    chunks = [NET_MAGIC, struct.pack("<II", NET_FORMAT_VERSION, len(net.layers))]
    for layer in net.layers:
        fan_in, fan_out = layer.weights.shape
        chunks.append(struct.pack("<IIB", fan_in, fan_out,
                                  _ACT_CODES[layer.activation]))
        chunks.append(layer.weights.astype("<f4").tobytes())
        chunks.append(layer.bias.astype("<f4").tobytes())
    return b"".join(chunks)


def save_network(net: Network, path: str) -> None:
    atomic_write_bytes(path, network_to_bytes(net))


def network_from_bytes(raw: bytes) -> Network:
    if len(raw) < 12:
        raise TruncatedFileError("model file shorter than header", offset=len(raw))
    if raw[:4] != NET_MAGIC:
        raise MagicError(f"bad magic {raw[:4]!r}, expected {NET_MAGIC!r}", offset=0)
    version, n_layers = struct.unpack_from("<II", raw, 4)
    if version != NET_FORMAT_VERSION:
        raise VersionError(f"unsupported model version {version}", offset=4)
    offset = 12
    layers = []
    for _ in range(n_layers):
        if offset + 9 > len(raw):
            raise TruncatedFileError("layer header truncated", offset=offset)
        fan_in, fan_out, code = struct.unpack_from("<IIB", raw, offset)
        offset += 9
        if code not in _ACT_NAMES:
            raise VersionError(f"unknown activation code {code}", offset=offset - 1)
        n_w, n_b = fan_in * fan_out * 4, fan_out * 4
        if offset + n_w + n_b > len(raw):
            raise TruncatedFileError("layer parameters truncated", offset=offset)
        weights = np.frombuffer(raw, dtype="<f4", count=fan_in * fan_out,
                                offset=offset).reshape(fan_in, fan_out).copy()
        offset += n_w
        bias = np.frombuffer(raw, dtype="<f4", count=fan_out, offset=offset).copy()
        offset += n_b
        layers.append(DenseLayer(weights, bias, _ACT_NAMES[code]))
    if offset != len(raw):
        raise TruncatedFileError(
            f"{len(raw) - offset} trailing bytes after last layer", offset=offset)
    return Network(layers)


def load_network(path: str) -> Network:
    with open(path, "rb") as fh:
        return network_from_bytes(fh.read())
