"""
Data processing module: utterance records and the frame-level tall matrix
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple
import logging

import numpy as np

from src.errors import ConfigurationError, ShapeError
from src.pitch import F0Trajectory, NormStats, compute_norm_stats, normalize

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_BN_DIM = 256
DEFAULT_XVEC_DIM = 512
MIN_SPLIT_ROWS = 10


@dataclass
class UtteranceRecord:
    """Frame-aligned BN features, x-vector and ground-truth F0 of one utterance

    Feature arrays are held in float32, the precision of the corpus container.
    """
    utt_id: str
    speaker_id: str
    bn: np.ndarray
    xvec: np.ndarray
    f0: F0Trajectory
    group: str = ""

    def __post_init__(self):
        self.bn = np.asarray(self.bn, dtype=np.float32)
        self.xvec = np.asarray(self.xvec, dtype=np.float32)
        self.f0 = F0Trajectory(
            np.asarray(self.f0.values, dtype=np.float32), hop=self.f0.hop, window=self.f0.window
        )
        if self.bn.ndim != 2:
            raise ShapeError(f"utterance '{self.utt_id}': bn must be a matrix, got shape {self.bn.shape}")
        if self.xvec.ndim != 1:
            raise ShapeError(f"utterance '{self.utt_id}': xvec must be a vector, got shape {self.xvec.shape}")
        if self.bn.shape[0] != len(self.f0):
            raise ShapeError(
                f"utterance '{self.utt_id}': bn has {self.bn.shape[0]} frames but f0 has {len(self.f0)}"
            )

    @property
    def n_frames(self) -> int:
        return self.bn.shape[0]

    @property
    def bn_dim(self) -> int:
        return self.bn.shape[1]

    @property
    def xvec_dim(self) -> int:
        return self.xvec.shape[0]


@dataclass(frozen=True)
class FrameMatrix:
    """Rows are frames across utterances: inputs [bn | xvec], normalized log-F0, voicing flag

    Provenance arrays give each row's utterance id and frame index.
    """
    inputs: np.ndarray
    targets_f0: np.ndarray
    voiced: np.ndarray
    utt_ids: np.ndarray
    frame_index: np.ndarray

    def __post_init__(self):
        n = self.inputs.shape[0]
        for name in ('targets_f0', 'voiced', 'utt_ids', 'frame_index'):
            if getattr(self, name).shape != (n,):
                raise ShapeError(f"{name} must have {n} rows")
        for array in (self.inputs, self.targets_f0, self.voiced, self.utt_ids, self.frame_index):
            array.flags.writeable = False

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def take(self, rows: np.ndarray) -> 'FrameMatrix':
        """Row subset in the given order"""
        rows = np.asarray(rows, dtype=np.int64)
        return FrameMatrix(
            inputs=self.inputs[rows],
            targets_f0=self.targets_f0[rows],
            voiced=self.voiced[rows],
            utt_ids=self.utt_ids[rows],
            frame_index=self.frame_index[rows],
        )


def _check_corpus_dims(utterances: Sequence[UtteranceRecord]) -> Tuple[int, int]:
    if not utterances:
        raise ShapeError("corpus is empty")
    bn_dim, xvec_dim = utterances[0].bn_dim, utterances[0].xvec_dim
    for utt in utterances:
        if utt.bn_dim != bn_dim or utt.xvec_dim != xvec_dim:
            raise ShapeError(
                f"utterance '{utt.utt_id}' has dims ({utt.bn_dim}, {utt.xvec_dim}), "
                f"corpus uses ({bn_dim}, {xvec_dim})"
            )
    return bn_dim, xvec_dim


def assemble_frames(utterances: Sequence[UtteranceRecord], stats: NormStats) -> FrameMatrix:
    """
    Concatenate utterances into a single tall matrix

    Args:
        utterances (Sequence[UtteranceRecord]): corpus in the desired row order
        stats (NormStats): normalization statistics of the training corpus

    Returns:
        FrameMatrix: one row per frame, x-vector repeated on every row of its utterance
    """
    bn_dim, xvec_dim = _check_corpus_dims(utterances)
    n_rows = sum(u.n_frames for u in utterances)

    inputs = np.empty((n_rows, bn_dim + xvec_dim), dtype=np.float64)
    targets = np.zeros(n_rows, dtype=np.float64)
    voiced = np.zeros(n_rows, dtype=bool)
    utt_ids = np.empty(n_rows, dtype=object)
    frame_index = np.empty(n_rows, dtype=np.int64)

    row = 0
    for utt in utterances:
        t = utt.n_frames
        block = slice(row, row + t)
        inputs[block, :bn_dim] = utt.bn
        inputs[block, bn_dim:] = utt.xvec
        is_voiced = utt.f0.voiced
        voiced[block] = is_voiced
        if is_voiced.any():
            targets[row:row + t][is_voiced] = normalize(utt.f0.values[is_voiced], stats)
        utt_ids[block] = utt.utt_id
        frame_index[block] = np.arange(t)
        row += t

    logger.info(f"Assembled {n_rows} frames from {len(utterances)} utterances ({int(voiced.sum())} voiced)")
    return FrameMatrix(inputs, targets, voiced, utt_ids, frame_index)


def split_indices(n_rows: int, val_fraction: float = 0.10, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted (train, val) row indices of a seeded uniform split"""
    if n_rows < MIN_SPLIT_ROWS:
        raise ShapeError(f"need at least {MIN_SPLIT_ROWS} frames to split, got {n_rows}")
    if not 0.0 < val_fraction < 1.0:
        raise ConfigurationError(f"val_fraction must lie in (0, 1), got {val_fraction}")

    n_val = int(np.floor(val_fraction * n_rows + 0.5))
    order = np.random.default_rng(seed).permutation(n_rows)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def split_frames(frames: FrameMatrix, val_fraction: float = 0.10,
                 seed: int = 0) -> Tuple[FrameMatrix, FrameMatrix]:
    """
    Row-level random train/validation split

    Frames of one utterance may land on both sides.

    Returns:
        Tuple[FrameMatrix, FrameMatrix]: (train, val), disjoint and exhaustive
    """
    train_rows, val_rows = split_indices(len(frames), val_fraction, seed)
    return frames.take(train_rows), frames.take(val_rows)


def prepare_training_frames(utterances: Sequence[UtteranceRecord], val_fraction: float = 0.10,
                            seed: int = 0) -> Tuple[FrameMatrix, FrameMatrix, NormStats]:
    """
    Split rows first, fit NormStats on training rows only, then build both matrices

    Returns:
        Tuple[FrameMatrix, FrameMatrix, NormStats]: (train, val, stats)
    """
    _check_corpus_dims(utterances)
    raw_f0 = np.concatenate([np.asarray(u.f0.values, dtype=np.float64) for u in utterances])
    train_rows, val_rows = split_indices(raw_f0.size, val_fraction, seed)

    stats = compute_norm_stats([F0Trajectory(raw_f0[train_rows])])
    frames = assemble_frames(utterances, stats)
    logger.info(
        f"Split {len(frames)} frames into {train_rows.size} train / {val_rows.size} val; "
        f"mean_log={stats.mean_log:.4f}, std_log={stats.std_log:.4f}"
    )
    return frames.take(train_rows), frames.take(val_rows), stats


def regroup_targets(frames: FrameMatrix) -> Dict[str, np.ndarray]:
    """Per-utterance target trajectories rebuilt from row provenance"""
    out: Dict[str, np.ndarray] = {}
    for utt_id in dict.fromkeys(frames.utt_ids):
        rows = np.nonzero(frames.utt_ids == utt_id)[0]
        order = np.argsort(frames.frame_index[rows], kind='stable')
        out[utt_id] = frames.targets_f0[rows][order]
    return out


def holdout_utterances(utterances: Sequence[UtteranceRecord],
                       per_speaker: int = 1) -> Tuple[List[UtteranceRecord], List[UtteranceRecord]]:
    """
    Reserve the last ``per_speaker`` utterances of every speaker

    Returns:
        Tuple[List, List]: (kept, held_out), each in corpus order
    """
    if per_speaker < 0:
        raise ConfigurationError("per_speaker must be >= 0")
    by_speaker: Dict[str, List[int]] = {}
    for i, utt in enumerate(utterances):
        by_speaker.setdefault(utt.speaker_id, []).append(i)

    held = set()
    for indices in by_speaker.values():
        if per_speaker >= len(indices):
            raise ConfigurationError("holdout would remove every utterance of a speaker")
        if per_speaker:
            held.update(indices[-per_speaker:])

    kept = [u for i, u in enumerate(utterances) if i not in held]
    held_out = [u for i, u in enumerate(utterances) if i in held]
    return kept, held_out


def speaker_xvectors(utterances: Sequence[UtteranceRecord]) -> Dict[str, np.ndarray]:
    """First x-vector seen for each speaker"""
    out: Dict[str, np.ndarray] = {}
    for utt in utterances:
        out.setdefault(utt.speaker_id, utt.xvec)
    return out
