"""
Dense feed-forward F0 regressor with hand-written forward and backward passes
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Tuple
import logging

import numpy as np

from src.errors import ConfigurationError, ShapeError
from src.losses import loss_backward, loss_forward

logger = logging.getLogger(__name__)

N_OUTPUTS = 2


class Activation(Enum):
    """Nonlinearity applied after each hidden FC block"""
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"


class Mode(Enum):
    """Forward-pass mode; dropout is only active in TRAIN"""
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class ModelConfig:
    """Network architecture"""
    input_dim: int
    hidden_sizes: Tuple[int, ...] = (256, 256, 256)
    activation: Activation = Activation.RELU
    dropout_p: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'hidden_sizes', tuple(int(h) for h in self.hidden_sizes))
        if isinstance(self.activation, str):
            try:
                object.__setattr__(self, 'activation', Activation(self.activation))
            except ValueError:
                raise ConfigurationError(f"Unknown activation: {self.activation}") from None

        if self.input_dim < 1:
            raise ConfigurationError(f"input_dim must be >= 1, got {self.input_dim}")
        for i, size in enumerate(self.hidden_sizes):
            if size < 1:
                raise ConfigurationError(f"hidden layer {i} has non-positive size {size}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")

    @property
    def layer_dims(self) -> List[Tuple[int, int]]:
        """(in_dim, out_dim) for every linear layer, output layer last"""
        sizes = [self.input_dim, *self.hidden_sizes, N_OUTPUTS]
        return list(zip(sizes[:-1], sizes[1:]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'input_dim': self.input_dim,
            'hidden_sizes': list(self.hidden_sizes),
            'activation': self.activation.value,
            'dropout_p': self.dropout_p,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        unknown = set(data) - {'input_dim', 'hidden_sizes', 'activation', 'dropout_p'}
        if unknown:
            raise ConfigurationError(f"Unknown model config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class LayerParams:
    """Weights [out_dim x in_dim] and bias [out_dim] of one linear layer"""
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"weights {self.weights.shape} and bias {self.bias.shape} do not form a layer"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> 'LayerParams':
        return LayerParams(self.weights.copy(), self.bias.copy())


@dataclass
class MLPModel:
    """Hidden FC blocks plus a two-neuron output layer

    Output column 0 is the normalized log-F0 prediction, column 1 the voicing logit.
    """
    config: ModelConfig
    layers: List[LayerParams]

    def __post_init__(self):
        expected = self.config.layer_dims
        if len(self.layers) != len(expected):
            raise ShapeError(f"expected {len(expected)} layers, got {len(self.layers)}")
        for i, (layer, (in_dim, out_dim)) in enumerate(zip(self.layers, expected)):
            if layer.weights.shape != (out_dim, in_dim):
                raise ShapeError(
                    f"layer {i} weights have shape {layer.weights.shape}, expected {(out_dim, in_dim)}"
                )

    @property
    def input_dim(self) -> int:
        return self.config.input_dim

    @property
    def dropout_p(self) -> float:
        return self.config.dropout_p

    @property
    def hidden_activation(self) -> Activation:
        return self.config.activation

    def named_parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Parameters in serialization order: per layer, weights then bias"""
        for i, layer in enumerate(self.layers):
            yield f"layers.{i}.weights", layer.weights
            yield f"layers.{i}.bias", layer.bias

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def copy(self) -> 'MLPModel':
        return MLPModel(self.config, [layer.copy() for layer in self.layers])

    def with_dropout(self, dropout_p: float) -> 'MLPModel':
        """Same weights under a different dropout probability"""
        return MLPModel(replace(self.config, dropout_p=dropout_p), self.layers)


@dataclass
class ForwardTrace:
    """Intermediate values of one forward pass, consumed by backward()

    ``masks`` holds the inverted-dropout multipliers (keep / (1 - p)) per layer
    in train mode and is empty in eval mode.
    """
    mode: Mode
    inputs: np.ndarray
    pre_activations: List[np.ndarray] = field(default_factory=list)
    post_activations: List[np.ndarray] = field(default_factory=list)
    masks: List[np.ndarray] = field(default_factory=list)

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]


@dataclass
class Gradients:
    """Per-layer parameter gradients, same layout as MLPModel.layers"""
    layers: List[LayerParams]

    def named_parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            yield f"layers.{i}.weights", layer.weights
            yield f"layers.{i}.bias", layer.bias

    def scaled(self, factor: float) -> 'Gradients':
        return Gradients([LayerParams(l.weights * factor, l.bias * factor) for l in self.layers])


def init_model(config: ModelConfig, seed: int) -> MLPModel:
    """
    Build a model with fan-in scaled uniform weights and zero biases

    Args:
        config (ModelConfig): architecture
        seed (int): generator seed; equal seeds give bit-identical models

    Returns:
        MLPModel: freshly initialized model
    """
    rng = np.random.default_rng(seed)
    layers = []
    for in_dim, out_dim in config.layer_dims:
        limit = np.sqrt(6.0 / in_dim)
        weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        layers.append(LayerParams(weights, np.zeros(out_dim)))

    model = MLPModel(config, layers)
    logger.debug(f"Initialized model {config.layer_dims} with {model.num_parameters()} parameters")
    return model


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    if activation is Activation.TANH:
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, activation: Activation) -> np.ndarray:
    """Derivative of the activation given its input z and output a"""
    if activation is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    if activation is Activation.TANH:
        return 1.0 - a * a
    return np.ones_like(z)


def forward(model: MLPModel, batch: np.ndarray, mode: Mode = Mode.EVAL,
            seed: Optional[int] = None) -> Tuple[np.ndarray, ForwardTrace]:
    """
    Run the network on a batch

    Every FC block is a linear layer followed by dropout; hidden blocks are then
    passed through the configured activation. Dropout uses inverted scaling so
    eval mode needs no rescaling.

    Args:
        model (MLPModel): network
        batch (np.ndarray): [B x input_dim] inputs
        mode (Mode): TRAIN enables dropout
        seed (int, optional): dropout mask seed, required in train mode when dropout_p > 0

    Returns:
        Tuple[np.ndarray, ForwardTrace]: [B x 2] predictions and the trace for backward()
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"batch has shape {x.shape}, model expects [B x {model.input_dim}]")

    p = model.dropout_p
    use_dropout = mode is Mode.TRAIN and p > 0.0
    if use_dropout and seed is None:
        raise ConfigurationError("train-mode forward with dropout requires a seed")
    rng = np.random.default_rng(seed) if use_dropout else None

    trace = ForwardTrace(mode=mode, inputs=x)
    a = x
    n_layers = len(model.layers)
    for i, layer in enumerate(model.layers):
        z = a @ layer.weights.T + layer.bias
        if use_dropout:
            mask = (rng.random(z.shape) >= p) / (1.0 - p)
            z = z * mask
            trace.masks.append(mask)
        trace.pre_activations.append(z)
        a = z if i == n_layers - 1 else _activate(z, model.hidden_activation)
        trace.post_activations.append(a)

    return a, trace


def backward(model: MLPModel, trace: ForwardTrace, grad_preds: np.ndarray) -> Gradients:
    """
    Backpropagate an output gradient through a recorded forward pass

    Args:
        model (MLPModel): the model used for the forward pass
        trace (ForwardTrace): trace of that pass; dropout masks are reused as recorded
        grad_preds (np.ndarray): [B x 2] gradient of the loss w.r.t. predictions

    Returns:
        Gradients: gradients for every weight and bias
    """
    n_layers = len(model.layers)
    if len(trace.pre_activations) != n_layers or (trace.masks and len(trace.masks) != n_layers):
        raise ShapeError("trace does not match model depth")
    grad = np.asarray(grad_preds, dtype=np.float64)
    if grad.shape != (trace.batch_size, N_OUTPUTS):
        raise ShapeError(f"grad_preds has shape {grad.shape}, expected {(trace.batch_size, N_OUTPUTS)}")

    grads: List[Optional[LayerParams]] = [None] * n_layers
    delta = grad
    for i in range(n_layers - 1, -1, -1):
        layer = model.layers[i]
        if trace.pre_activations[i].shape[1] != layer.out_dim:
            raise ShapeError(f"trace layer {i} width does not match model")
        if i < n_layers - 1:
            delta = delta * _activation_grad(
                trace.pre_activations[i], trace.post_activations[i], model.hidden_activation
            )
        if trace.masks:
            delta = delta * trace.masks[i]

        a_prev = trace.inputs if i == 0 else trace.post_activations[i - 1]
        grads[i] = LayerParams(delta.T @ a_prev, delta.sum(axis=0))
        if i > 0:
            delta = delta @ layer.weights

    return Gradients(grads)


def relative_error(analytic: float, numeric: float, floor: float = 1e-5) -> float:
    """|a - n| / max(|a|, |n|, floor); 0 when both sides are exactly zero"""
    diff = abs(analytic - numeric)
    if diff == 0.0:
        return 0.0
    return diff / max(abs(analytic), abs(numeric), floor)


def grad_check(model: MLPModel, batch: np.ndarray, targets: np.ndarray, voiced: np.ndarray,
               alpha: float, epsilon: float = 1e-5, floor: float = 1e-5) -> float:
    """
    Compare backprop gradients against central finite differences

    Runs in eval mode so the loss is deterministic. Every parameter entry is
    perturbed in place and restored exactly afterwards.

    Args:
        model (MLPModel): model to check
        batch (np.ndarray): [B x input_dim] inputs
        targets (np.ndarray): [B] normalized F0 targets
        voiced (np.ndarray): [B] voicing labels
        alpha (float): loss trade-off weight
        epsilon (float): finite-difference step
        floor (float): denominator floor for relative errors of tiny gradients

    Returns:
        float: maximum relative error over all parameters
    """
    preds, trace = forward(model, batch, Mode.EVAL)
    grad_preds = loss_backward(preds, targets, voiced, alpha)
    analytic = backward(model, trace, grad_preds)

    def loss_at() -> float:
        out, _ = forward(model, batch, Mode.EVAL)
        return loss_forward(out, targets, voiced, alpha).total

    max_err = 0.0
    worst = None
    for (name, param), (_, grad) in zip(model.named_parameters(), analytic.named_parameters()):
        flat_param = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for j in range(flat_param.size):
            original = flat_param[j]
            flat_param[j] = original + epsilon
            loss_plus = loss_at()
            flat_param[j] = original - epsilon
            loss_minus = loss_at()
            flat_param[j] = original

            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            err = relative_error(flat_grad[j], numeric, floor)
            if err > max_err:
                max_err = err
                worst = (name, j)

    logger.debug(f"Gradient check max relative error {max_err:.3e} at {worst}")
    return max_err
