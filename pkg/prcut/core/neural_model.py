"""
Feed-forward assignment network: linear layers with GeLU between them and a
row-wise softmax on top. Forward and backward passes are written out by hand;
the optimizers follow the usual SGD / RMSProp / Adam update rules with
decoupled weight decay.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from scipy.special import erf

from prcut import config
from prcut.errors import DataFormatError, NonFiniteError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "rmsprop", "adam")
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_CHECKPOINT_MAGIC = b"PRCKPT1\0"


@dataclass(frozen=True)
class MlpSpec:
    """layer_widths = [p, hidden..., k]."""

    layer_widths: Tuple[int, ...]
    weight_norm_first_last: bool = False
    dtype: str = "float64"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ValidationError("an MLP needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ValidationError(f"zero-width layer in {widths}")
        if widths[-1] < 2:
            raise ValidationError("the output width k must be >= 2")
        if self.dtype not in ("float64", "float32"):
            raise ValidationError(f"unsupported dtype {self.dtype!r}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def is_weight_normed(self, layer: int) -> bool:
        return self.weight_norm_first_last and layer in (0, self.n_layers - 1)


def linear_spec(p: int, k: int) -> MlpSpec:
    """Single linear layer followed by the softmax (embedding inputs)."""
    return MlpSpec((p, k))


def mlp_spec(p: int, k: int, hidden: int = 512, depth: int = 3) -> MlpSpec:
    """`depth` linear layers of constant width, first and last weight-normalized."""
    return MlpSpec((p,) + (hidden,) * (depth - 1) + (k,), weight_norm_first_last=True)


@dataclass
class MlpModel:
    spec: MlpSpec
    seed: int
    params: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    def layer_weight(self, layer: int) -> np.ndarray:
        """Effective (out, in) weight; g · v / ‖v‖ row-wise for weight-normed layers."""
        if self.spec.is_weight_normed(layer):
            v = self.params[f"layer{layer}.direction"]
            g = self.params[f"layer{layer}.scale"]
            return g[:, None] * v / np.linalg.norm(v, axis=1, keepdims=True)
        return self.params[f"layer{layer}.weight"]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    output: np.ndarray


def init_mlp(spec: MlpSpec, seed: int) -> MlpModel:
    """Kaiming-uniform weights (bound √(6 / fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(spec.dtype)
    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for layer, (fan_in, fan_out) in enumerate(zip(spec.layer_widths[:-1], spec.layer_widths[1:])):
        bound = math.sqrt(6.0 / fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype)
        if spec.is_weight_normed(layer):
            params[f"layer{layer}.direction"] = weight
            params[f"layer{layer}.scale"] = np.linalg.norm(weight, axis=1).astype(dtype)
        else:
            params[f"layer{layer}.weight"] = weight
        params[f"layer{layer}.bias"] = np.zeros(fan_out, dtype=dtype)
    return MlpModel(spec, seed, params)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return cdf + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: MlpModel, X: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    X = np.asarray(X, dtype=model.spec.dtype)
    if X.ndim != 2 or X.shape[1] != model.spec.layer_widths[0]:
        raise ShapeError(f"expected inputs of width {model.spec.layer_widths[0]}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteError("non-finite network input")
    inputs, pre = [], []
    h = X
    last = model.spec.n_layers - 1
    for layer in range(model.spec.n_layers):
        inputs.append(h)
        z = h @ model.layer_weight(layer).T + model.params[f"layer{layer}.bias"]
        pre.append(z)
        h = softmax(z) if layer == last else gelu(z)
    return h, ForwardCache(inputs, pre, h)


def backward(model: MlpModel, cache: ForwardCache, dP: np.ndarray) -> "OrderedDict[str, np.ndarray]":
    """Gradients of Σ_ij dP_ij P_ij with respect to every parameter."""
    dP = np.asarray(dP, dtype=cache.output.dtype)
    if dP.shape != cache.output.shape:
        raise ShapeError(f"dP has shape {dP.shape}, network output is {cache.output.shape}")
    P = cache.output
    dz = P * (dP - np.sum(dP * P, axis=1, keepdims=True))
    grads: Dict[str, np.ndarray] = {}
    for layer in reversed(range(model.spec.n_layers)):
        h = cache.inputs[layer]
        dW = dz.T @ h
        grads[f"layer{layer}.bias"] = dz.sum(axis=0)
        if model.spec.is_weight_normed(layer):
            v = model.params[f"layer{layer}.direction"]
            g = model.params[f"layer{layer}.scale"]
            norm = np.linalg.norm(v, axis=1, keepdims=True)
            u = v / norm
            proj = np.sum(dW * u, axis=1, keepdims=True)
            grads[f"layer{layer}.scale"] = proj.ravel()
            grads[f"layer{layer}.direction"] = (g[:, None] / norm) * (dW - proj * u)
        else:
            grads[f"layer{layer}.weight"] = dW
        if layer > 0:
            dh = dz @ model.layer_weight(layer)
            dz = dh * gelu_grad(cache.pre_activations[layer - 1])
    return OrderedDict((name, grads[name]) for name in model.params)


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = config.LEARNING_RATE
    weight_decay: float = config.WEIGHT_DECAY
    step: int = 0
    momentum: float = 0.0
    rho: float = 0.99
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first: Dict[str, np.ndarray] = field(default_factory=dict)
    second: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ValidationError(f"unknown optimizer {self.kind!r}, expected one of {OPTIMIZERS}")
        if not self.lr > 0 or self.weight_decay < 0:
            raise ValidationError("lr must be > 0 and weight_decay >= 0")


def _direction(opt: OptimizerState, name: str, grad: np.ndarray) -> np.ndarray:
    if opt.kind == "sgd":
        if opt.momentum == 0.0:
            return grad
        buf = opt.first.get(name, np.zeros_like(grad))
        buf = opt.momentum * buf + grad
        opt.first[name] = buf
        return buf
    if opt.kind == "rmsprop":
        sq = opt.second.get(name, np.zeros_like(grad))
        sq = opt.rho * sq + (1.0 - opt.rho) * grad * grad
        opt.second[name] = sq
        return grad / (np.sqrt(sq) + opt.eps)
    m = opt.first.get(name, np.zeros_like(grad))
    v = opt.second.get(name, np.zeros_like(grad))
    m = opt.beta1 * m + (1.0 - opt.beta1) * grad
    v = opt.beta2 * v + (1.0 - opt.beta2) * grad * grad
    opt.first[name], opt.second[name] = m, v
    m_hat = m / (1.0 - opt.beta1**opt.step)
    v_hat = v / (1.0 - opt.beta2**opt.step)
    return m_hat / (np.sqrt(v_hat) + opt.eps)


def optimizer_step(opt: OptimizerState, model: MlpModel, grads: "OrderedDict[str, np.ndarray]") -> None:
    """In-place update θ ← θ - lr · (direction + weight_decay · θ)."""
    if set(grads) != set(model.params):
        raise ShapeError("gradient names do not match the model parameters")
    for name, grad in grads.items():
        if grad.shape != model.params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient for {name} at optimizer step {opt.step + 1}")
    opt.step += 1
    for name, grad in grads.items():
        theta = model.params[name]
        update = _direction(opt, name, grad)
        if opt.weight_decay:
            update = update + opt.weight_decay * theta
        model.params[name] = (theta - opt.lr * update).astype(theta.dtype, copy=False)


def save_checkpoint(path: Union[str, Path], model: MlpModel, step: int) -> None:
    """magic, u64 header length, JSON header, then float64 LE parameters in declaration order."""
    header = {
        "spec": asdict(model.spec),
        "seed": model.seed,
        "step": step,
        "params": [[name, list(p.shape)] for name, p in model.params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params.values())
    Path(path).write_bytes(_CHECKPOINT_MAGIC + struct.pack("<Q", len(blob)) + blob + body)


def _checkpoint_header(path, data: bytes) -> Tuple[dict, int]:
    if len(data) < 16 or data[:8] != _CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: not a PRCut checkpoint")
    (size,) = struct.unpack("<Q", data[8:16])
    if 16 + size > len(data):
        raise DataFormatError(f"{path}: header of {size} bytes runs past the end of the file")
    try:
        header = json.loads(data[16 : 16 + size].decode("utf-8"))
        spec = header["spec"]
        header["spec"] = MlpSpec(tuple(spec["layer_widths"]), spec["weight_norm_first_last"], spec["dtype"])
        header["params"] = [(str(name), tuple(int(d) for d in shape)) for name, shape in header["params"]]
        header["seed"], header["step"] = int(header["seed"]), int(header["step"])
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: unreadable checkpoint header ({exc})") from exc
    return header, 16 + size


def load_checkpoint(path: Union[str, Path]) -> Tuple[MlpModel, int]:
    data = Path(path).read_bytes()
    header, offset = _checkpoint_header(path, data)
    spec = header["spec"]
    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise DataFormatError(f"{path}: truncated parameter block for {name}")
        params[name] = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).astype(spec.dtype)
        offset = end
    if offset != len(data):
        raise DataFormatError(f"{path}: {len(data) - offset} trailing bytes")
    return MlpModel(spec, header["seed"], params), header["step"]
