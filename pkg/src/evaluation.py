"""
Evaluation metrics and the cross-embedding swap experiment
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from src.bundle import TrainedBundle
from src.config import Config
from src.data_processor import UtteranceRecord
from src.errors import ConfigurationError, EvaluationError, InsufficientOverlapError, ShapeError
from src.file_utils import atomic_write
from src.pitch import F0Trajectory
from src.training import predict_utterance

logger = logging.getLogger(__name__)

PredictFn = Callable[[UtteranceRecord], F0Trajectory]

TRAJECTORY_COLUMNS = ['label', 'frame_index', 'time_s', 'f0_hz']


def _check_lengths(a: F0Trajectory, b: F0Trajectory) -> None:
    if len(a) != len(b):
        raise ShapeError(f"trajectory lengths differ: {len(a)} vs {len(b)}")


def _mutually_voiced(a: F0Trajectory, b: F0Trajectory) -> np.ndarray:
    _check_lengths(a, b)
    mask = a.voiced & b.voiced
    if int(mask.sum()) < 2:
        raise InsufficientOverlapError(f"insufficient overlap: {int(mask.sum())} mutually voiced frames")
    return mask


def pitch_correlation(a: F0Trajectory, b: F0Trajectory) -> float:
    """
    Pearson correlation of Hz values over frames voiced in both trajectories

    Returns 0.0 when either side is constant on those frames.
    """
    mask = _mutually_voiced(a, b)
    x = np.asarray(a.values, dtype=np.float64)[mask]
    y = np.asarray(b.values, dtype=np.float64)[mask]
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    xc, yc = x - x.mean(), y - y.mean()
    r = np.sum(xc * yc) / np.sqrt(np.sum(xc * xc) * np.sum(yc * yc))
    return float(np.clip(r, -1.0, 1.0))


@dataclass(frozen=True)
class VoicingMetrics:
    """Binary voicing scores with voiced as the positive class"""
    accuracy: float
    precision: float
    recall: float
    f1: float
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    true_negatives: int = 0


def voicing_metrics(pred: F0Trajectory, truth: F0Trajectory) -> VoicingMetrics:
    """
    Accuracy, precision, recall and F1 of predicted voicing

    Precision, recall and F1 are 0.0 when their denominators vanish.
    """
    _check_lengths(pred, truth)
    p, t = pred.voiced, truth.voiced
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    tn = int(np.sum(~p & ~t))

    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return VoicingMetrics(accuracy, precision, recall, f1, tp, fp, fn, tn)


def _rmse(pred: F0Trajectory, truth: F0Trajectory) -> Tuple[float, float]:
    mask = _mutually_voiced(pred, truth)
    p = np.asarray(pred.values, dtype=np.float64)[mask]
    t = np.asarray(truth.values, dtype=np.float64)[mask]
    return float(np.sqrt(np.mean((p - t) ** 2))), float(np.sqrt(np.mean((np.log(p) - np.log(t)) ** 2)))


@dataclass(frozen=True)
class UtteranceScores:
    utt_id: str
    group: str
    rho_f0: float
    voicing: VoicingMetrics
    rmse_hz: float
    rmse_log: float


@dataclass(frozen=True)
class GroupReport:
    n_utterances: int
    rho_f0: float
    f1: float
    rmse_hz: float


@dataclass(frozen=True)
class EvalReport:
    """Means over evaluated utterances

    ``per_group`` splits the same means by speaker group; rho_f0 is the
    utterance-weighted mean of the group values.
    """
    rho_f0: float
    voicing: VoicingMetrics
    rmse_hz: float
    rmse_log: float
    n_utterances: int
    n_skipped: int = 0
    per_group: Dict[str, GroupReport] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['voicing'] = {k: data['voicing'][k] for k in ('accuracy', 'precision', 'recall', 'f1')}
        return data


def _mean_voicing(scores: Sequence[UtteranceScores]) -> VoicingMetrics:
    return VoicingMetrics(
        accuracy=float(np.mean([s.voicing.accuracy for s in scores])),
        precision=float(np.mean([s.voicing.precision for s in scores])),
        recall=float(np.mean([s.voicing.recall for s in scores])),
        f1=float(np.mean([s.voicing.f1 for s in scores])),
        true_positives=sum(s.voicing.true_positives for s in scores),
        false_positives=sum(s.voicing.false_positives for s in scores),
        false_negatives=sum(s.voicing.false_negatives for s in scores),
        true_negatives=sum(s.voicing.true_negatives for s in scores),
    )


def score_utterance(pred: F0Trajectory, utt: UtteranceRecord) -> UtteranceScores:
    rho = pitch_correlation(pred, utt.f0)
    rmse_hz, rmse_log = _rmse(pred, utt.f0)
    return UtteranceScores(utt.utt_id, utt.group, rho, voicing_metrics(pred, utt.f0), rmse_hz, rmse_log)


def evaluate(bundle: Optional[TrainedBundle], corpus: Sequence[UtteranceRecord],
             predict_fn: Optional[PredictFn] = None) -> EvalReport:
    """
    Predict every utterance and average per-utterance metrics

    Utterances are processed in utt_id order. Those with fewer than two
    mutually voiced frames are skipped and counted.

    Args:
        bundle (TrainedBundle): trained model; may be None when predict_fn is given
        corpus (Sequence[UtteranceRecord]): utterances to score
        predict_fn (Callable, optional): replaces model prediction, e.g. an oracle

    Returns:
        EvalReport: aggregate and per-group scores
    """
    if not corpus:
        raise ConfigurationError("cannot evaluate an empty corpus")
    if predict_fn is None:
        if bundle is None:
            raise ConfigurationError("evaluate needs a bundle or a predict_fn")

        def predict_fn(utt: UtteranceRecord) -> F0Trajectory:
            return predict_utterance(bundle, utt.bn, utt.xvec, hop=utt.f0.hop, window=utt.f0.window)

    scores: List[UtteranceScores] = []
    skipped = 0
    for utt in sorted(corpus, key=lambda u: u.utt_id):
        try:
            scores.append(score_utterance(predict_fn(utt), utt))
        except InsufficientOverlapError:
            logger.warning(f"Skipping utterance '{utt.utt_id}': insufficient overlap")
            skipped += 1

    if not scores:
        raise EvaluationError(f"all {skipped} utterances were skipped for insufficient overlap")

    per_group: Dict[str, GroupReport] = {}
    for group in sorted({s.group for s in scores}):
        members = [s for s in scores if s.group == group]
        per_group[group] = GroupReport(
            n_utterances=len(members),
            rho_f0=float(np.mean([s.rho_f0 for s in members])),
            f1=float(np.mean([s.voicing.f1 for s in members])),
            rmse_hz=float(np.mean([s.rmse_hz for s in members])),
        )

    report = EvalReport(
        rho_f0=float(np.clip(np.mean([s.rho_f0 for s in scores]), -1.0, 1.0)),
        voicing=_mean_voicing(scores),
        rmse_hz=float(np.mean([s.rmse_hz for s in scores])),
        rmse_log=float(np.mean([s.rmse_log for s in scores])),
        n_utterances=len(scores),
        n_skipped=skipped,
        per_group=per_group,
    )
    logger.info(
        f"Evaluated {report.n_utterances} utterances ({skipped} skipped): "
        f"rho_f0={report.rho_f0:.4f} f1={report.voicing.f1:.4f} rmse={report.rmse_hz:.2f} Hz"
    )
    return report


def write_report_json(report: EvalReport, path: str) -> None:
    with atomic_write(path, 'w') as handle:
        json.dump(report.to_dict(), handle, indent=2, sort_keys=True)
        handle.write('\n')
    logger.info(f"Wrote evaluation report to {path}")


@dataclass(frozen=True)
class SwapResult:
    """Prediction from one utterance's BN features and another speaker's x-vector"""
    source_utt_id: str
    donor_speaker_id: str
    predicted: F0Trajectory
    voiced_mean_shift_hz: float
    voicing_agreement: float
    rho_f0: float = float('nan')


def swap_experiment(bundle: TrainedBundle, source: UtteranceRecord, donor_xvec: np.ndarray,
                    donor_speaker_id: str) -> SwapResult:
    """
    Predict F0 for ``source`` conditioned on a donor x-vector

    Raises InsufficientOverlapError when prediction and ground truth share fewer
    than two voiced frames; its ``partial`` carries the SwapResult with the
    voicing agreement filled in and NaN shift and correlation.
    """
    predicted = predict_utterance(bundle, source.bn, donor_xvec, hop=source.f0.hop, window=source.f0.window)
    truth = source.f0
    agreement = float(np.mean(predicted.voiced == truth.voiced)) if len(truth) else 0.0

    try:
        rho = pitch_correlation(predicted, truth)
    except InsufficientOverlapError as e:
        partial = SwapResult(source.utt_id, donor_speaker_id, predicted, float('nan'), agreement)
        raise InsufficientOverlapError(str(e), partial=partial) from None

    pred_values = np.asarray(predicted.values, dtype=np.float64)
    truth_values = np.asarray(truth.values, dtype=np.float64)
    shift = float(pred_values[predicted.voiced].mean() - truth_values[truth.voiced].mean())

    logger.info(
        f"Swap {source.utt_id} <- {donor_speaker_id}: shift={shift:+.1f} Hz, "
        f"agreement={agreement:.3f}, rho={rho:.3f}"
    )
    return SwapResult(source.utt_id, donor_speaker_id, predicted, shift, agreement, rho)


def trajectories_frame(items: Sequence[Tuple[str, F0Trajectory]]) -> pd.DataFrame:
    frames = []
    for label, trajectory in items:
        frame = trajectory.to_frame()
        frame.insert(0, 'label', label)
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=TRAJECTORY_COLUMNS)
    return pd.concat(frames, ignore_index=True)[TRAJECTORY_COLUMNS]


def export_trajectories_csv(items: Sequence[Tuple[str, F0Trajectory]], path: str) -> None:
    """Long-format overlay CSV `label,frame_index,time_s,f0_hz`; unvoiced frames are 0.0"""
    with atomic_write(path, 'w') as handle:
        trajectories_frame(items).to_csv(handle, index=False, lineterminator='\n')
    logger.info(f"Wrote {len(items)} trajectories to {path}")


def read_trajectories_csv(path: str) -> List[Tuple[str, F0Trajectory]]:
    """Parse a file written by export_trajectories_csv(), labels in first-seen order"""
    data = pd.read_csv(path, dtype={'label': str})
    missing = set(TRAJECTORY_COLUMNS) - set(data.columns)
    if missing:
        raise ConfigurationError(f"{path}: overlay CSV lacks columns {sorted(missing)}")
    items = []
    for label in dict.fromkeys(data['label']):
        rows = data[data['label'] == label].sort_values('frame_index')
        times = rows['time_s'].to_numpy(dtype=np.float64)
        hop = float(times[1] - times[0]) if times.size > 1 and times[1] > times[0] else Config.FRAME_HOP_S
        items.append((label, F0Trajectory(rows['f0_hz'].to_numpy(dtype=np.float64), hop=hop)))
    return items
