"""
Mini-batch training with validation, plateau learning-rate decay and early stopping
"""

from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from src.bundle import TrainedBundle
from src.config import Config
from src.data_processor import FrameMatrix
from src.errors import ConfigurationError, NumericalError, ShapeError
from src.file_utils import atomic_write
from src.losses import loss_backward, loss_forward
from src.network import Activation, MLPModel, ModelConfig, Mode, backward, forward, init_model
from src.optimizers import OptimizerKind, init_optimizer_state, optimizer_step
from src.pitch import F0Trajectory, NormStats, gate_logits

# Configure logging
logging.basicConfig(level=Config.LOG_LEVEL)
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; the defaults are the tuned production setting"""
    lr: float = 0.0007
    alpha: float = 0.00022
    dropout_p: float = 0.0
    batch_size: int = 1024
    max_epochs: int = 200
    early_stop_patience: int = 10
    lr_patience: int = 5
    lr_factor: float = 0.1
    val_fraction: float = 0.10
    optimizer: str = OptimizerKind.ADAM.value
    hidden_sizes: Tuple[int, ...] = (256, 256, 256)
    activation: str = Activation.RELU.value
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'hidden_sizes', tuple(int(h) for h in self.hidden_sizes))
        errors = self.validate()
        if errors:
            raise ConfigurationError("; ".join(errors))

    def validate(self) -> List[str]:
        """Return a list of problems, empty when the config is usable"""
        errors = []
        if not self.lr > 0:
            errors.append(f"lr must be > 0, got {self.lr}")
        if not self.alpha >= 0:
            errors.append(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.dropout_p < 1.0:
            errors.append(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.batch_size < 1:
            errors.append("batch_size must be >= 1")
        if self.max_epochs < 1:
            errors.append("max_epochs must be >= 1")
        if self.early_stop_patience < 1 or self.lr_patience < 1:
            errors.append("patience values must be >= 1")
        if not 0.0 < self.lr_factor < 1.0:
            errors.append(f"lr_factor must lie in (0, 1), got {self.lr_factor}")
        if not 0.0 < self.val_fraction < 1.0:
            errors.append(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.optimizer not in {k.value for k in OptimizerKind}:
            errors.append(f"unknown optimizer {self.optimizer}")
        if self.activation not in {a.value for a in Activation}:
            errors.append(f"unknown activation {self.activation}")
        if any(h < 1 for h in self.hidden_sizes):
            errors.append("hidden sizes must be >= 1")
        return errors

    def model_config(self, input_dim: int) -> ModelConfig:
        return ModelConfig(input_dim, self.hidden_sizes, Activation(self.activation), self.dropout_p)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['hidden_sizes'] = list(self.hidden_sizes)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrainConfig':
        """Build from JSON; an optional nested "model" object sets hidden_sizes/activation"""
        data = dict(data)
        model = data.pop('model', None) or {}
        unknown_model = set(model) - {'hidden_sizes', 'activation'}
        if unknown_model:
            raise ConfigurationError(f"Unknown model config keys: {sorted(unknown_model)}")
        data.update(model)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"Unknown train config keys: {sorted(unknown)}")
        return cls(**data)


class PlateauAction(Enum):
    """What a plateau tracker asks the training loop to do"""
    NONE = "none"
    REDUCE_LR = "reduce_lr"
    STOP = "stop"


@dataclass(frozen=True)
class PlateauState:
    """Counts epochs without strict improvement of the validation loss

    ``on_plateau`` is REDUCE_LR (counter resets after firing) or STOP
    (latches permanently once fired).
    """
    patience: int
    on_plateau: PlateauAction
    best_val: float = float('inf')
    stale_count: int = 0
    latched: bool = False

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.on_plateau is PlateauAction.NONE:
            raise ConfigurationError("on_plateau must be REDUCE_LR or STOP")


def plateau_step(state: PlateauState, val_loss: float) -> Tuple[PlateauState, PlateauAction]:
    """
    Advance a plateau tracker by one epoch

    Args:
        state (PlateauState): tracker before this epoch
        val_loss (float): this epoch's validation loss

    Returns:
        Tuple[PlateauState, PlateauAction]: updated tracker and the action to take
    """
    if not np.isfinite(val_loss):
        raise NumericalError(f"validation loss is not finite: {val_loss}")
    if state.latched:
        return state, PlateauAction.STOP

    if val_loss < state.best_val:
        return replace(state, best_val=float(val_loss), stale_count=0), PlateauAction.NONE

    stale = state.stale_count + 1
    if stale < state.patience:
        return replace(state, stale_count=stale), PlateauAction.NONE
    if state.on_plateau is PlateauAction.REDUCE_LR:
        return replace(state, stale_count=0), PlateauAction.REDUCE_LR
    return replace(state, stale_count=stale, latched=True), PlateauAction.STOP


@dataclass(frozen=True)
class EpochReport:
    """Per-epoch training record"""
    epoch: int
    train_loss: float
    val_loss: float
    current_lr: float
    stale_epochs_early_stop: int
    stale_epochs_lr: int
    action: str = PlateauAction.NONE.value


def evaluate_loss(model: MLPModel, frames: FrameMatrix, alpha: float,
                  chunk_rows: int = Config.EVAL_CHUNK_ROWS) -> float:
    """Joint loss in eval mode over a whole FrameMatrix, predicted in fixed chunks"""
    if len(frames) == 0:
        raise ShapeError("cannot evaluate loss on an empty frame matrix")
    preds = np.concatenate([
        forward(model, frames.inputs[start:start + chunk_rows], Mode.EVAL)[0]
        for start in range(0, len(frames), chunk_rows)
    ])
    return loss_forward(preds, frames.targets_f0, frames.voiced, alpha).total


def _dropout_seed(seed: int, epoch: int, batch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, batch]).generate_state(1)[0])


def train(train_frames: FrameMatrix, val_frames: FrameMatrix, cfg: TrainConfig,
          norm_stats: NormStats,
          model_cfg: Optional[ModelConfig] = None) -> Tuple[TrainedBundle, List[EpochReport]]:
    """
    Train the regressor and return the best-validation parameters

    Args:
        train_frames (FrameMatrix): training rows
        val_frames (FrameMatrix): validation rows
        cfg (TrainConfig): hyperparameters and seed
        norm_stats (NormStats): statistics the targets were normalized with
        model_cfg (ModelConfig, optional): architecture; derived from cfg when omitted

    Returns:
        Tuple[TrainedBundle, List[EpochReport]]: bundle and per-epoch history
    """
    if len(train_frames) == 0 or len(val_frames) == 0:
        raise ShapeError("training and validation frames must be nonempty")
    if model_cfg is None:
        model_cfg = cfg.model_config(train_frames.input_dim)
    else:
        model_cfg = replace(model_cfg, dropout_p=cfg.dropout_p)
    if model_cfg.input_dim != train_frames.input_dim or val_frames.input_dim != train_frames.input_dim:
        raise ShapeError(f"model expects {model_cfg.input_dim} inputs, frames have {train_frames.input_dim}")

    model = init_model(model_cfg, seed=cfg.seed)
    opt_state = init_optimizer_state(model, lr=cfg.lr, kind=OptimizerKind(cfg.optimizer))
    lr_tracker = PlateauState(cfg.lr_patience, PlateauAction.REDUCE_LR)
    stopper = PlateauState(cfg.early_stop_patience, PlateauAction.STOP)
    shuffle_rng = np.random.default_rng(cfg.seed)

    n_rows = len(train_frames)
    n_reductions = 0
    best_model, best_val = model, float('inf')
    history: List[EpochReport] = []

    logger.info(
        f"Training {model_cfg.layer_dims} on {n_rows} frames "
        f"(val {len(val_frames)}), lr={cfg.lr}, alpha={cfg.alpha}, p={cfg.dropout_p}"
    )

    for epoch in range(cfg.max_epochs):
        epoch_lr = opt_state.lr
        order = shuffle_rng.permutation(n_rows)
        loss_sum = 0.0

        for batch_idx, start in enumerate(range(0, n_rows, cfg.batch_size)):
            rows = order[start:start + cfg.batch_size]
            inputs = train_frames.inputs[rows]
            targets = train_frames.targets_f0[rows]
            voiced = train_frames.voiced[rows]

            preds, trace = forward(model, inputs, Mode.TRAIN, seed=_dropout_seed(cfg.seed, epoch, batch_idx))
            breakdown = loss_forward(preds, targets, voiced, cfg.alpha)
            if not np.isfinite(breakdown.total):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {batch_idx}")

            grads = backward(model, trace, loss_backward(preds, targets, voiced, cfg.alpha))
            try:
                model, opt_state = optimizer_step(model, grads, opt_state)
            except NumericalError as e:
                raise NumericalError(f"epoch {epoch}, batch {batch_idx}: {e}") from e
            loss_sum += breakdown.total * rows.size

        train_loss = loss_sum / n_rows
        val_loss = evaluate_loss(model, val_frames, cfg.alpha)
        if not np.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")

        if val_loss < best_val:
            best_model, best_val = model, val_loss

        # LR reduction is applied before the early-stop check
        lr_tracker, lr_action = plateau_step(lr_tracker, val_loss)
        if lr_action is PlateauAction.REDUCE_LR:
            n_reductions += 1
            opt_state = opt_state.with_lr(cfg.lr * cfg.lr_factor ** n_reductions)
            logger.info(f"Epoch {epoch}: validation plateau, lr -> {opt_state.lr:.3g}")
        stopper, stop_action = plateau_step(stopper, val_loss)

        action = stop_action if stop_action is PlateauAction.STOP else lr_action
        history.append(EpochReport(
            epoch=epoch,
            train_loss=float(train_loss),
            val_loss=float(val_loss),
            current_lr=epoch_lr,
            stale_epochs_early_stop=stopper.stale_count,
            stale_epochs_lr=lr_tracker.stale_count,
            action=action.value,
        ))
        logger.info(
            f"Epoch {epoch}: train={train_loss:.6f} val={val_loss:.6f} lr={epoch_lr:.3g} "
            f"stale={stopper.stale_count}/{cfg.early_stop_patience}"
        )

        if stop_action is PlateauAction.STOP:
            logger.info(f"Early stopping at epoch {epoch}; best val={best_val:.6f}")
            break

    bundle = TrainedBundle(model=best_model.with_dropout(cfg.dropout_p), norm_stats=norm_stats,
                           train_config=cfg.to_dict())
    return bundle, history


def history_frame(history: Sequence[EpochReport]) -> pd.DataFrame:
    return pd.DataFrame({
        'epoch': [r.epoch for r in history],
        'train_loss': [r.train_loss for r in history],
        'val_loss': [r.val_loss for r in history],
        'lr': [r.current_lr for r in history],
    })


def write_history_csv(history: Sequence[EpochReport], path: str) -> None:
    """Write `epoch,train_loss,val_loss,lr`"""
    with atomic_write(path, 'w') as handle:
        history_frame(history).to_csv(handle, index=False, lineterminator='\n')
    logger.info(f"Wrote {len(history)} epochs of history to {path}")


def predict_utterance(bundle: TrainedBundle, bn: np.ndarray, xvec: np.ndarray,
                      hop: float = Config.FRAME_HOP_S,
                      window: float = Config.FRAME_WINDOW_S) -> F0Trajectory:
    """
    Predict an F0 trajectory for one utterance

    Args:
        bundle (TrainedBundle): trained model and statistics
        bn (np.ndarray): [T x D_bn] BN features
        xvec (np.ndarray): [D_xv] speaker embedding

    Returns:
        F0Trajectory: Hz per frame, 0.0 where the voicing logit is <= 0
    """
    bn = np.asarray(bn, dtype=np.float64)
    xvec = np.asarray(xvec, dtype=np.float64)
    if bn.ndim != 2 or xvec.ndim != 1:
        raise ShapeError(f"bn must be a matrix and xvec a vector, got {bn.shape} and {xvec.shape}")
    if bn.shape[1] + xvec.shape[0] != bundle.input_dim:
        raise ShapeError(
            f"features have {bn.shape[1]} + {xvec.shape[0]} dims, bundle expects {bundle.input_dim}"
        )
    if bn.shape[0] == 0:
        return F0Trajectory(np.zeros(0), hop=hop, window=window)

    inputs = np.hstack([bn, np.broadcast_to(xvec, (bn.shape[0], xvec.shape[0]))])
    preds, _ = forward(bundle.model, inputs, Mode.EVAL)
    return F0Trajectory(gate_logits(preds[:, 0], preds[:, 1], bundle.norm_stats), hop=hop, window=window)
