from dataclasses import dataclass, field
from typing import Literal

from loguru import logger
import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import log_softmax as _log_softmax, softmax as _softmax

from calibreg.errors import DimensionMismatchError, InvalidArgumentError
from calibreg.numerics import Matrix, Rng, Vector, as_matrix


Activation = Literal["relu", "tanh"]
Mode = Literal["train", "eval"]


@dataclass
class DenseLayer:
    weight: Matrix
    bias: Vector

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class Network:
    layers: list[DenseLayer]
    activation: Activation = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        if not self.layers:
            raise InvalidArgumentError("network: at least one layer is required")
        if self.activation not in ("relu", "tanh"):
            raise InvalidArgumentError(f"network: unsupported activation '{self.activation}'")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidArgumentError(f"network: dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        for i, layer in enumerate(self.layers):
            if layer.bias.shape != (layer.out_dim,):
                raise DimensionMismatchError(f"network: layer {i} bias has shape {layer.bias.shape}")
            if i > 0 and self.layers[i - 1].out_dim != layer.in_dim:
                raise DimensionMismatchError(
                    f"network: layer {i - 1} outputs {self.layers[i - 1].out_dim} but layer {i} expects {layer.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> list[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def parameters(self) -> list[NDArray[np.float64]]:
        params = []
        for layer in self.layers:
            params.extend([layer.weight, layer.bias])
        return params

    def with_parameters(self, params: list[NDArray[np.float64]]) -> "Network":
        layers = [
            DenseLayer(weight=np.array(params[2 * i], dtype=np.float64), bias=np.array(params[2 * i + 1], dtype=np.float64))
            for i in range(len(self.layers))
        ]
        return Network(layers=layers, activation=self.activation, dropout_rate=self.dropout_rate)

    def copy(self) -> "Network":
        return self.with_parameters([p.copy() for p in self.parameters()])

    def sum_squared_weights(self) -> float:
        return float(sum(np.sum(layer.weight**2) for layer in self.layers))


@dataclass
class ForwardTrace:
    layer_inputs: list[Matrix]
    pre_activations: list[Matrix]
    masks: list[Matrix | None] = field(default_factory=list)
    mode: Mode = "eval"


@dataclass
class LayerGradient:
    weight: Matrix
    bias: Vector


def init_network(
    dims: list[int],
    rng: Rng,
    activation: Activation = "relu",
    dropout_rate: float = 0.0,
) -> Network:
    """He fan-in initialization: weights ~ N(0, 2 / in_dim), zero biases."""
    if len(dims) < 2:
        raise InvalidArgumentError(f"network: need input and output dims, got {dims}")

    layers = []
    for in_dim, out_dim in zip(dims[:-1], dims[1:], strict=True):
        weight = rng.normal((in_dim, out_dim)) * np.sqrt(2.0 / in_dim)
        layers.append(DenseLayer(weight=weight, bias=np.zeros(out_dim)))

    logger.debug(f"Initialized network {dims} ({activation}, dropout={dropout_rate})")
    return Network(layers=layers, activation=activation, dropout_rate=dropout_rate)


def _activate(z: Matrix, activation: Activation) -> Matrix:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z: Matrix, activation: Activation) -> Matrix:
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - np.tanh(z) ** 2


def forward(net: Network, batch: ArrayLike, mode: Mode = "eval", rng: Rng | None = None) -> tuple[Matrix, ForwardTrace]:
    """Logits for a batch; train mode applies inverted dropout after each hidden activation."""
    x = as_matrix(batch, "batch")
    if x.shape[1] != net.in_dim:
        raise DimensionMismatchError(f"network: batch has {x.shape[1]} features, network expects {net.in_dim}")

    use_dropout = mode == "train" and net.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise InvalidArgumentError("network: train-mode dropout needs an Rng")
    keep = 1.0 - net.dropout_rate

    trace = ForwardTrace(layer_inputs=[], pre_activations=[], masks=[], mode=mode)
    a = x
    for i, layer in enumerate(net.layers):
        trace.layer_inputs.append(a)
        z = a @ layer.weight + layer.bias
        if i == len(net.layers) - 1:
            return z, trace

        trace.pre_activations.append(z)
        a = _activate(z, net.activation)
        mask = None
        if use_dropout:
            mask = (rng.uniform(size=a.shape) < keep).astype(np.float64) / keep
            a = a * mask
        trace.masks.append(mask)

    raise AssertionError("unreachable")


def softmax(logits: ArrayLike) -> Matrix:
    return _softmax(as_matrix(logits, "logits"), axis=1)


def log_softmax(logits: ArrayLike) -> Matrix:
    return _log_softmax(as_matrix(logits, "logits"), axis=1)


def _check_labels(labels: ArrayLike, n_rows: int, n_classes: int) -> NDArray[np.int64]:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n_rows,):
        raise DimensionMismatchError(f"network: expected {n_rows} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidArgumentError(f"network: labels must lie in [0, {n_classes - 1}]")
    return labels


def nll_loss(logits: ArrayLike, labels: ArrayLike) -> tuple[float, Matrix]:
    z = as_matrix(logits, "logits")
    m, k = z.shape
    labels = _check_labels(labels, m, k)

    log_probs = log_softmax(z)
    rows = np.arange(m)
    loss = -float(np.mean(log_probs[rows, labels]))

    dlogits = np.exp(log_probs)
    dlogits[rows, labels] -= 1.0
    dlogits /= m
    return loss, dlogits


def backward(net: Network, trace: ForwardTrace, dlogits: ArrayLike) -> list[LayerGradient]:
    g = as_matrix(dlogits, "dlogits")
    if len(trace.layer_inputs) != len(net.layers) or len(trace.pre_activations) != len(net.layers) - 1:
        raise DimensionMismatchError("network: trace was not produced by this network")
    if g.shape != (trace.layer_inputs[0].shape[0], net.n_classes):
        raise DimensionMismatchError(f"network: dlogits shape {g.shape} does not match the traced batch")

    grads: list[LayerGradient] = [None] * len(net.layers)  # type: ignore[list-item]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        a = trace.layer_inputs[i]
        if a.shape[1] != layer.in_dim:
            raise DimensionMismatchError(f"network: traced input of layer {i} has width {a.shape[1]}")
        grads[i] = LayerGradient(weight=a.T @ g, bias=g.sum(axis=0))

        if i > 0:
            g = g @ layer.weight.T
            mask = trace.masks[i - 1] if trace.masks else None
            if mask is not None:
                g = g * mask
            g = g * _activation_grad(trace.pre_activations[i - 1], net.activation)

    return grads


def predict_logits(net: Network, batch: ArrayLike) -> Matrix:
    logits, _ = forward(net, batch, mode="eval")
    return logits


def predict_proba(net: Network, batch: ArrayLike) -> Matrix:
    return softmax(predict_logits(net, batch))


def predict_mc_dropout(net: Network, batch: ArrayLike, n_samples: int, rng: Rng) -> Matrix:
    if net.dropout_rate <= 0.0:
        raise InvalidArgumentError("network: MC-dropout needs a network with dropout_rate > 0")
    if n_samples < 1:
        raise InvalidArgumentError(f"network: n_samples must be >= 1, got {n_samples}")

    total = None
    for _ in range(n_samples):
        logits, _ = forward(net, batch, mode="train", rng=rng)
        probs = softmax(logits)
        total = probs if total is None else total + probs

    return total / n_samples
