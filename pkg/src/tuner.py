"""
Hyperparameter study over (lr, alpha, dropout_p)
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
import pandas as pd

from src.config import Config
from src.data_processor import FrameMatrix
from src.errors import ConfigurationError, StudyError
from src.file_utils import atomic_write
from src.pitch import NormStats
from src.training import TrainConfig, train

logger = logging.getLogger(__name__)

Params = Dict[str, float]
Objective = Callable[[Params], float]

PARAM_NAMES = ('lr', 'alpha', 'dropout_p')


@dataclass(frozen=True)
class SearchSpace:
    """Bounds per axis; lr and alpha are sampled log-uniformly, dropout_p uniformly

    Equal bounds pin an axis to that value.
    """
    lr: Tuple[float, float] = (1e-5, 1e-2)
    alpha: Tuple[float, float] = (1e-5, 1e-1)
    dropout_p: Tuple[float, float] = (0.0, 0.5)

    def __post_init__(self):
        for name in PARAM_NAMES:
            low, high = getattr(self, name)
            if not low <= high:
                raise ConfigurationError(f"{name}: lower bound {low} exceeds upper bound {high}")
        for name in ('lr', 'alpha'):
            if getattr(self, name)[0] <= 0:
                raise ConfigurationError(f"{name} bounds must be strictly positive")
        if self.dropout_p[0] < 0 or self.dropout_p[1] >= 1:
            raise ConfigurationError("dropout_p bounds must lie in [0, 1)")

    def contains(self, params: Params) -> bool:
        return all(getattr(self, n)[0] <= params[n] <= getattr(self, n)[1] for n in PARAM_NAMES)


def _log_uniform(bounds: Tuple[float, float], rng: np.random.Generator) -> float:
    low, high = bounds
    if low == high:
        return float(low)
    value = math.exp(rng.uniform(math.log(low), math.log(high)))
    return float(min(max(value, low), high))


def _uniform(bounds: Tuple[float, float], rng: np.random.Generator) -> float:
    low, high = bounds
    if low == high:
        return float(low)
    return float(min(max(rng.uniform(low, high), low), high))


def suggest(space: SearchSpace, rng: np.random.Generator) -> Params:
    """Draw one parameter point; lr, alpha and dropout_p are drawn in that order"""
    return {
        'lr': _log_uniform(space.lr, rng),
        'alpha': _log_uniform(space.alpha, rng),
        'dropout_p': _uniform(space.dropout_p, rng),
    }


class TrialStatus(Enum):
    COMPLETE = "complete"
    FAILED = "failed"


@dataclass(frozen=True)
class Trial:
    trial_id: int
    params: Params
    objective: float
    status: TrialStatus

    @property
    def is_complete(self) -> bool:
        return self.status is TrialStatus.COMPLETE


def _evaluate(trial_id: int, params: Params, objective: Objective) -> Trial:
    try:
        value = float(objective(params))
    except Exception as e:
        logger.warning(f"Trial {trial_id} failed: {e}")
        return Trial(trial_id, params, float('nan'), TrialStatus.FAILED)
    if not math.isfinite(value):
        logger.warning(f"Trial {trial_id} returned non-finite objective {value}")
        return Trial(trial_id, params, float('nan'), TrialStatus.FAILED)
    return Trial(trial_id, params, value, TrialStatus.COMPLETE)


class RandomSampler:
    """Random search; every trial's parameters are fixed up front from the seed

    Each trial draws from its own child of ``SeedSequence(seed)``, so running
    trials on a thread pool gives the same study as running them in order.
    """

    name = "random"

    def __init__(self, space: SearchSpace, seed: int):
        self.space = space
        self.seed = seed

    def plan(self, n_trials: int) -> List[Params]:
        children = np.random.SeedSequence(self.seed).spawn(n_trials)
        return [suggest(self.space, np.random.default_rng(child)) for child in children]

    def run(self, objective: Objective, n_trials: int, n_workers: int = 1) -> List[Trial]:
        planned = self.plan(n_trials)
        if n_workers <= 1:
            return [_evaluate(i, p, objective) for i, p in enumerate(planned)]
        with ThreadPoolExecutor(n_workers) as pool:
            return list(pool.map(lambda item: _evaluate(item[0], item[1], objective), enumerate(planned)))


class TPESampler:
    """Tree-structured Parzen estimator via optuna's ask/tell interface

    Trials run sequentially since each proposal depends on earlier results.
    """

    name = "tpe"

    def __init__(self, space: SearchSpace, seed: int):
        self.space = space
        self.seed = seed

    def run(self, objective: Objective, n_trials: int, n_workers: int = 1) -> List[Trial]:
        import optuna

        optuna.logging.set_verbosity(optuna.logging.WARNING)
        study = optuna.create_study(direction="minimize", sampler=optuna.samplers.TPESampler(seed=self.seed))
        trials = []
        for trial_id in range(n_trials):
            handle = study.ask()
            params = {
                'lr': handle.suggest_float('lr', *self.space.lr, log=True),
                'alpha': handle.suggest_float('alpha', *self.space.alpha, log=True),
                'dropout_p': handle.suggest_float('dropout_p', *self.space.dropout_p),
            }
            trial = _evaluate(trial_id, params, objective)
            if trial.is_complete:
                study.tell(handle, trial.objective)
            else:
                study.tell(handle, state=optuna.trial.TrialState.FAIL)
            trials.append(trial)
        return trials


SAMPLERS = {RandomSampler.name: RandomSampler, TPESampler.name: TPESampler}


def run_study(objective: Objective, space: Optional[SearchSpace] = None, n_trials: int = 50,
              seed: int = 0, sampler: Union[str, RandomSampler, TPESampler] = "random",
              n_workers: int = 1) -> Tuple[Trial, List[Trial]]:
    """
    Evaluate ``n_trials`` suggested points and return the best complete trial

    Args:
        objective (Callable): params -> scalar to minimize; errors and non-finite values fail the trial
        space (SearchSpace, optional): bounds, defaults to SearchSpace()
        n_trials (int): number of trials (>= 1)
        seed (int): study seed
        sampler (str or sampler): "random" (default) or "tpe", or a sampler instance
        n_workers (int): thread-pool size for samplers that allow it

    Returns:
        Tuple[Trial, List[Trial]]: best trial and all trials in trial_id order
    """
    if n_trials < 1:
        raise ConfigurationError(f"n_trials must be >= 1, got {n_trials}")
    space = space or SearchSpace()
    if isinstance(sampler, str):
        if sampler not in SAMPLERS:
            raise ConfigurationError(f"unknown sampler '{sampler}', choose from {sorted(SAMPLERS)}")
        sampler = SAMPLERS[sampler](space, seed)

    trials = sampler.run(objective, n_trials, n_workers)

    best: Optional[Trial] = None
    for trial in trials:
        if trial.is_complete and (best is None or trial.objective < best.objective):
            best = trial
        logger.info(
            f"Trial {trial.trial_id} {trial.status.value}: objective={trial.objective:.6g} "
            f"params={trial.params}; best so far "
            f"{'none' if best is None else f'{best.objective:.6g} (trial {best.trial_id})'}"
        )

    if best is None:
        raise StudyError(f"all {n_trials} trials failed")
    return best, trials


def running_best(trials: Sequence[Trial]) -> List[float]:
    """Running minimum over complete trials, inf until the first completes"""
    out, current = [], float('inf')
    for trial in trials:
        if trial.is_complete:
            current = min(current, trial.objective)
        out.append(current)
    return out


def make_training_objective(train_frames: FrameMatrix, val_frames: FrameMatrix, norm_stats: NormStats,
                            base_config: Optional[TrainConfig] = None, max_epochs: int = Config.TUNE_MAX_EPOCHS) -> Objective:
    """
    Objective that trains with the suggested (lr, alpha, dropout_p) on a capped
    epoch budget and returns the best validation loss
    """
    base = base_config or TrainConfig()
    budget = min(base.max_epochs, max_epochs)

    def objective(params: Params) -> float:
        cfg = replace(base, lr=params['lr'], alpha=params['alpha'],
                      dropout_p=params['dropout_p'], max_epochs=budget)
        _, history = train(train_frames, val_frames, cfg, norm_stats)
        return min(report.val_loss for report in history)

    return objective


def study_frame(trials: Sequence[Trial]) -> pd.DataFrame:
    return pd.DataFrame({
        'trial_id': [t.trial_id for t in trials],
        'lr': [t.params['lr'] for t in trials],
        'alpha': [t.params['alpha'] for t in trials],
        'dropout_p': [t.params['dropout_p'] for t in trials],
        'objective': [t.objective for t in trials],
        'status': [t.status.value for t in trials],
    })


def write_study_log(trials: Sequence[Trial], path: str) -> None:
    """Write `trial_id,lr,alpha,dropout_p,objective,status`; failed objectives are empty"""
    with atomic_write(path, 'w') as handle:
        study_frame(trials).to_csv(handle, index=False, lineterminator='\n')
    logger.info(f"Wrote {len(trials)} trials to {path}")


def write_best_json(best: Trial, path: str) -> None:
    payload = {'trial_id': best.trial_id, 'objective': best.objective, **best.params}
    with atomic_write(path, 'w') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write('\n')
