"""
Joint regression/classification loss

total = MSE(F0 - F0_hat) over voiced frames + alpha * BCE-with-logits over all frames
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from src.errors import ConfigurationError, ShapeError


@dataclass(frozen=True)
class LossBreakdown:
    """Loss value split into its two terms"""
    total: float
    mse_term: float
    bce_term: float
    alpha: float
    n_voiced: int


def _check_inputs(preds: np.ndarray, targets_f0: np.ndarray, voiced: np.ndarray, alpha: float):
    preds = np.asarray(preds, dtype=np.float64)
    targets_f0 = np.asarray(targets_f0, dtype=np.float64)
    voiced = np.asarray(voiced, dtype=bool)

    if preds.ndim != 2 or preds.shape[1] != 2:
        raise ShapeError(f"preds must have shape [B x 2], got {preds.shape}")
    batch = preds.shape[0]
    if batch == 0:
        raise ShapeError("loss requires at least one frame")
    if targets_f0.shape != (batch,) or voiced.shape != (batch,):
        raise ShapeError(
            f"targets {targets_f0.shape} and voiced {voiced.shape} must both have length {batch}"
        )
    if not alpha >= 0:
        raise ConfigurationError(f"alpha must be >= 0, got {alpha}")

    return preds, targets_f0, voiced


def loss_forward(preds: np.ndarray, targets_f0: np.ndarray, voiced: np.ndarray,
                 alpha: float) -> LossBreakdown:
    """
    Evaluate the joint loss for a batch

    Args:
        preds (np.ndarray): [B x 2] network output (normalized F0, voicing logit)
        targets_f0 (np.ndarray): [B] normalized log-F0 targets
        voiced (np.ndarray): [B] voicing labels
        alpha (float): weight of the classification term

    Returns:
        LossBreakdown: total and per-term values
    """
    preds, targets_f0, voiced = _check_inputs(preds, targets_f0, voiced, alpha)

    n_voiced = int(voiced.sum())
    if n_voiced > 0:
        diff = preds[voiced, 0] - targets_f0[voiced]
        mse_term = float(np.mean(diff * diff))
    else:
        mse_term = 0.0

    logits = preds[:, 1]
    labels = voiced.astype(np.float64)
    # log(1 + exp(z)) - z*y, stable for large |z|
    bce = np.logaddexp(0.0, logits) - logits * labels
    bce_term = float(np.mean(bce))

    return LossBreakdown(
        total=mse_term + alpha * bce_term,
        mse_term=mse_term,
        bce_term=bce_term,
        alpha=float(alpha),
        n_voiced=n_voiced,
    )


def loss_backward(preds: np.ndarray, targets_f0: np.ndarray, voiced: np.ndarray,
                  alpha: float) -> np.ndarray:
    """
    Gradient of LossBreakdown.total with respect to preds

    Returns:
        np.ndarray: [B x 2] gradient; column 0 is zero on unvoiced rows
    """
    preds, targets_f0, voiced = _check_inputs(preds, targets_f0, voiced, alpha)
    batch = preds.shape[0]
    grad = np.zeros_like(preds)

    n_voiced = int(voiced.sum())
    if n_voiced > 0:
        grad[voiced, 0] = 2.0 * (preds[voiced, 0] - targets_f0[voiced]) / n_voiced

    grad[:, 1] = alpha * (expit(preds[:, 1]) - voiced.astype(np.float64)) / batch
    return grad
