"""
Parameter update rules: adaptive moment estimation (Adam) and plain SGD
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from src.errors import ConfigurationError, NumericalError, ShapeError
from src.network import Gradients, LayerParams, MLPModel


class OptimizerKind(Enum):
    """Supported update rules"""
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class OptimizerState:
    """Moment accumulators keyed by parameter name plus hyperparameters"""
    kind: OptimizerKind
    lr: float
    beta1: float
    beta2: float
    eps: float
    step: int
    first_moments: Dict[str, np.ndarray]
    second_moments: Dict[str, np.ndarray]

    def with_lr(self, lr: float) -> 'OptimizerState':
        if not lr > 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        return replace(self, lr=lr)


def init_optimizer_state(model: MLPModel, lr: float = 0.0007, kind: OptimizerKind = OptimizerKind.ADAM,
                         beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    """
    Create zeroed moment accumulators matching a model

    Args:
        model (MLPModel): model whose parameters will be updated
        lr (float): learning rate
        kind (OptimizerKind): update rule
        beta1 (float): first-moment decay
        beta2 (float): second-moment decay
        eps (float): denominator constant

    Returns:
        OptimizerState: state at step 0
    """
    if isinstance(kind, str):
        try:
            kind = OptimizerKind(kind)
        except ValueError:
            raise ConfigurationError(f"Unknown optimizer: {kind}") from None
    if not lr > 0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ConfigurationError(f"moment decay rates must lie in [0, 1), got {beta1}, {beta2}")
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")

    first = {name: np.zeros_like(p) for name, p in model.named_parameters()}
    second = {name: np.zeros_like(p) for name, p in model.named_parameters()}
    return OptimizerState(kind, float(lr), beta1, beta2, eps, 0, first, second)


def optimizer_step(model: MLPModel, grads: Gradients,
                   state: OptimizerState) -> Tuple[MLPModel, OptimizerState]:
    """
    Apply one update; inputs are left untouched

    Adam uses bias-corrected moments:
    param -= lr * m_hat / (sqrt(v_hat) + eps).

    Args:
        model (MLPModel): current parameters
        grads (Gradients): gradients with the model's layout
        state (OptimizerState): current optimizer state

    Returns:
        Tuple[MLPModel, OptimizerState]: updated copies
    """
    grad_map = dict(grads.named_parameters())
    for name, param in model.named_parameters():
        grad = grad_map.get(name)
        if grad is None or grad.shape != param.shape:
            raise ShapeError(f"gradient for {name} missing or misshapen")
        if name not in state.first_moments or state.first_moments[name].shape != param.shape:
            raise ShapeError(f"optimizer state does not match parameter {name}")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient in parameter tensor {name}")

    step = state.step + 1
    new_params: Dict[str, np.ndarray] = {}
    first: Dict[str, np.ndarray] = {}
    second: Dict[str, np.ndarray] = {}

    if state.kind is OptimizerKind.ADAM:
        bc1 = 1.0 - state.beta1 ** step
        bc2 = 1.0 - state.beta2 ** step
        for name, param in model.named_parameters():
            g = grad_map[name]
            m = state.beta1 * state.first_moments[name] + (1.0 - state.beta1) * g
            v = state.beta2 * state.second_moments[name] + (1.0 - state.beta2) * (g * g)
            update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
            new_params[name] = param - update
            first[name] = m
            second[name] = v
    else:
        for name, param in model.named_parameters():
            new_params[name] = param - state.lr * grad_map[name]
        first = state.first_moments
        second = state.second_moments

    layers = [
        LayerParams(new_params[f"layers.{i}.weights"], new_params[f"layers.{i}.bias"])
        for i in range(len(model.layers))
    ]
    for name, value in new_params.items():
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"update produced non-finite values in {name}")

    return MLPModel(model.config, layers), replace(
        state, step=step, first_moments=first, second_moments=second
    )
