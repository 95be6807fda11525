"""
Fully-connected classifier with exact analytic backpropagation.

Parameters live in one flat float64 vector: for each layer the weight
matrix (fan_in x fan_out, row-major) followed by its bias, layers in order.
The output layer is allocated for every class of every task up front; each
loss reads only its own class range.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from core.errors import ClassRangeError, DimensionError, LabelRangeError, NumericError
from core.numerics import cross_entropy_rows, kl_rows, softmax

logger = logging.getLogger(__name__)

ACTIVATIONS = ('relu', 'tanh')


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: Tuple[int, ...]
    total_classes: int
    activation: str = 'relu'

    def __post_init__(self):
        object.__setattr__(self, 'hidden_dims', tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.total_classes < 1:
            raise DimensionError("input_dim and total_classes must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise DimensionError(f"Hidden widths must be positive: {self.hidden_dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation: {self.activation}")

    @property
    def layer_dims(self) -> List[Tuple[int, int]]:
        widths = [self.input_dim, *self.hidden_dims, self.total_classes]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def param_count(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_dims)

    def to_dict(self) -> dict:
        return {
            'input_dim': self.input_dim,
            'hidden_dims': list(self.hidden_dims),
            'total_classes': self.total_classes,
            'activation': self.activation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'MlpSpec':
        return cls(
            input_dim=int(data['input_dim']),
            hidden_dims=tuple(data['hidden_dims']),
            total_classes=int(data['total_classes']),
            activation=data.get('activation', 'relu'),
        )


@dataclass(frozen=True)
class LossSpec:
    """
    One scalar loss over a contiguous class range of the head.

    kind 'ce': `labels` are head indices inside `class_range`.
    kind 'kl': `target` rows are probability vectors over `class_range`; the
    student distribution is softmax(logits[class_range] / temperature).
    The loss of a batch is the mean over its rows.
    """
    kind: str
    class_range: range
    labels: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    temperature: float = 1.0

    @classmethod
    def cross_entropy(cls, labels, class_range: range) -> 'LossSpec':
        return cls('ce', class_range, labels=np.atleast_1d(np.asarray(labels, dtype=np.int64)))

    @classmethod
    def kl(cls, target, class_range: range, temperature: float = 1.0) -> 'LossSpec':
        return cls('kl', class_range, target=np.atleast_2d(np.asarray(target, dtype=np.float64)),
                   temperature=temperature)


def unflatten(spec: MlpSpec, params: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Split a flat parameter vector into (W, b) views, one per layer"""
    if params.shape != (spec.param_count,):
        raise DimensionError(
            f"Parameter vector has shape {params.shape}, spec needs ({spec.param_count},)")

    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_dims:
        weights = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        bias = params[offset:offset + fan_out]
        offset += fan_out
        layers.append((weights, bias))
    return layers


def flatten(layers: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Concatenate (weights, bias) pairs into one flat vector, layers in order"""
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in layers])


class Network:
    """Trainable MLP. Single writer: only the trainer mutates `params`."""

    def __init__(self, spec: MlpSpec, params: np.ndarray):
        self.spec = spec
        self.params = np.array(params, dtype=np.float64)
        unflatten(spec, self.params)

    def layers(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return unflatten(self.spec, self.params)

    def set_params(self, params: np.ndarray):
        """Replace the parameters in place; the layout must match the spec"""
        params = np.asarray(params, dtype=np.float64)
        if params.shape != self.params.shape:
            raise DimensionError(f"Cannot load {params.shape} parameters into {self.params.shape}")
        self.params = params.copy()

    def copy(self) -> 'Network':
        return Network(self.spec, self.params.copy())

    def loss_and_gradient(self, x, loss: LossSpec) -> Tuple[float, np.ndarray]:
        """Batch-mean loss and its exact gradient over the flat parameters"""
        return _loss_and_gradient(self.spec, self.params, x, loss)


def init(spec: MlpSpec, seed: int) -> Network:
    """
    Glorot-uniform weights, zero biases.

    Draws come from a Philox (counter-based) generator keyed by `seed`, so the
    same seed always reproduces the same parameters.
    """
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2 ** 64 - 1)))
    params = np.zeros(spec.param_count, dtype=np.float64)
    for weights, _ in unflatten(spec, params):
        fan_in, fan_out = weights.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights[...] = rng.uniform(-limit, limit, size=weights.shape)

    logger.debug(f"Initialised {spec.param_count} parameters with seed {seed}")
    return Network(spec, params)


def _as_batch(spec: MlpSpec, x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[np.newaxis, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != spec.input_dim:
        raise DimensionError(f"Input has shape {x.shape}, network expects dim {spec.input_dim}")
    return batch, single


def _activate(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == 'relu':
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(spec: MlpSpec, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if spec.activation == 'relu':
        return (z > 0).astype(np.float64)
    return 1.0 - a * a


def _forward_pass(spec: MlpSpec, params: np.ndarray, batch: np.ndarray):
    """Returns logits plus the (pre-activation, activation) cache for backprop"""
    layers = unflatten(spec, params)
    cache = []
    h = batch
    for index, (weights, bias) in enumerate(layers):
        z = h @ weights + bias
        if index == len(layers) - 1:
            cache.append((h, z, None))
            return z, cache
        a = _activate(spec, z)
        cache.append((h, z, a))
        h = a
    raise DimensionError("Network has no layers")


def forward(model, x) -> np.ndarray:
    """
    Logits over every class of the head for `x` (one sample or a batch).

    `model` is anything with `spec` and `params`: a live Network or a frozen
    FunctionSnapshot.
    """
    batch, single = _as_batch(model.spec, x)
    logits, _ = _forward_pass(model.spec, model.params, batch)
    return logits[0] if single else logits


def _check_range(spec: MlpSpec, class_range: range):
    if (class_range.step != 1 or len(class_range) == 0 or class_range.start < 0
            or class_range.stop > spec.total_classes):
        raise ClassRangeError(
            f"Class range {class_range} invalid for a head of {spec.total_classes} classes")


def _loss_and_logit_grad(spec: MlpSpec, logits: np.ndarray, loss: LossSpec) -> Tuple[float, np.ndarray]:
    _check_range(spec, loss.class_range)
    lo, hi = loss.class_range.start, loss.class_range.stop
    batch_size = logits.shape[0]
    d_logits = np.zeros_like(logits)

    if loss.kind == 'ce':
        labels = np.asarray(loss.labels, dtype=np.int64)
        if labels.shape != (batch_size,):
            raise DimensionError(f"{labels.shape[0]} labels for a batch of {batch_size}")
        if np.any(labels < lo) or np.any(labels >= hi):
            raise LabelRangeError(f"Labels {labels.tolist()} fall outside {loss.class_range}")
        probs = softmax(logits[:, lo:hi])
        value = float(np.mean(cross_entropy_rows(probs, labels - lo)))
        grad = probs.copy()
        grad[np.arange(batch_size), labels - lo] -= 1.0
        d_logits[:, lo:hi] = grad / batch_size
    elif loss.kind == 'kl':
        target = np.asarray(loss.target, dtype=np.float64)
        if target.shape != (batch_size, hi - lo):
            raise DimensionError(
                f"KL target has shape {target.shape}, expected {(batch_size, hi - lo)}")
        temperature = loss.temperature
        student = softmax(logits[:, lo:hi], temperature)
        value = float(np.mean(kl_rows(target, student)))
        d_logits[:, lo:hi] = (student - target) / (temperature * batch_size)
    else:
        raise ValueError(f"Unknown loss kind: {loss.kind}")

    return value, d_logits


def _loss_and_gradient(spec: MlpSpec, params: np.ndarray, x, loss: LossSpec) -> Tuple[float, np.ndarray]:
    batch, _ = _as_batch(spec, x)
    logits, cache = _forward_pass(spec, params, batch)
    value, upstream = _loss_and_logit_grad(spec, logits, loss)
    if not np.isfinite(value):
        raise NumericError(f"Loss is not finite: {value}")

    layers = unflatten(spec, params)
    grads = []
    for index in range(len(cache) - 1, -1, -1):
        h_in, z, a = cache[index]
        if a is not None:
            upstream = upstream * _activation_grad(spec, z, a)
        grads.append((h_in.T @ upstream, np.sum(upstream, axis=0)))
        if index > 0:
            upstream = upstream @ layers[index][0].T

    grads.reverse()
    return value, flatten(grads)


def loss_value(model, x, loss: LossSpec) -> float:
    """Scalar loss of `model` on `x`; also used as the finite-difference oracle"""
    batch, _ = _as_batch(model.spec, x)
    logits, _ = _forward_pass(model.spec, model.params, batch)
    value, _ = _loss_and_logit_grad(model.spec, logits, loss)
    return value


def backward(net: Network, x, loss: LossSpec) -> np.ndarray:
    """Exact gradient of `loss` with respect to the flat parameter vector"""
    _, gradient = net.loss_and_gradient(x, loss)
    return gradient
