"""
Pitch extraction and F0 normalization

A YIN-family tracker supplies ground-truth F0; log-domain global mean-variance
normalization maps F0 to network targets and back; gating turns network
outputs into Hz trajectories.
"""

from dataclasses import dataclass
from typing import Iterable, Optional, Union
import logging

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile

from src.config import Config
from src.errors import ConfigurationError, DomainError, NoVoicedFramesError, ShapeError
from src.file_utils import atomic_write

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-6

ArrayLike = Union[float, np.ndarray]


@dataclass
class AudioBuffer:
    """Mono samples in [-1, 1] at a fixed rate"""
    samples: np.ndarray
    sample_rate: int = Config.DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ShapeError(f"audio must be mono, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class F0Trajectory:
    """Per-frame F0 in Hz; 0.0 marks an unvoiced frame"""
    values: np.ndarray
    hop: float = Config.FRAME_HOP_S
    window: float = Config.FRAME_WINDOW_S

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 1:
            raise ShapeError(f"F0 trajectory must be 1-D, got shape {self.values.shape}")
        if self.hop <= 0 or self.window <= 0:
            raise ConfigurationError("hop and window must be positive")

    def __len__(self) -> int:
        return self.values.size

    @property
    def voiced(self) -> np.ndarray:
        return self.values > 0

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.hop

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'frame_index': np.arange(len(self)),
            'time_s': self.times,
            'f0_hz': self.values.astype(np.float64),
        })

    def to_csv(self, path: str) -> None:
        """Write `frame_index,time_s,f0_hz`"""
        with atomic_write(path, 'w') as handle:
            self.to_frame().to_csv(handle, index=False, lineterminator='\n')
        logger.info(f"Wrote {len(self)} F0 frames to {path}")

    @classmethod
    def from_csv(cls, path: str) -> 'F0Trajectory':
        data = pd.read_csv(path)
        missing = {'frame_index', 'time_s', 'f0_hz'} - set(data.columns)
        if missing:
            raise ConfigurationError(f"F0 CSV {path} lacks columns {sorted(missing)}")
        hop = float(data['time_s'].iloc[1] - data['time_s'].iloc[0]) if len(data) > 1 else Config.FRAME_HOP_S
        return cls(data['f0_hz'].to_numpy(dtype=np.float64), hop=hop if hop > 0 else Config.FRAME_HOP_S)


@dataclass(frozen=True)
class TrackerConfig:
    """YIN tracker settings"""
    f_min: float = 60.0
    f_max: float = 400.0
    threshold: float = 0.15
    hop: float = Config.FRAME_HOP_S
    window: float = Config.FRAME_WINDOW_S
    silence_rms: float = 1e-4

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ConfigurationError(f"need 0 < f_min < f_max, got f_min={self.f_min}, f_max={self.f_max}")
        if self.hop <= 0 or self.window <= 0:
            raise ConfigurationError("hop and window must be positive")
        if not 0 < self.threshold < 1:
            raise ConfigurationError(f"threshold must lie in (0, 1), got {self.threshold}")


@dataclass(frozen=True)
class NormStats:
    """Global mean and std of ln(F0) over voiced training frames"""
    mean_log: float
    std_log: float

    def __post_init__(self):
        if not (np.isfinite(self.mean_log) and np.isfinite(self.std_log)):
            raise ConfigurationError("normalization statistics must be finite")
        if self.std_log < STD_FLOOR:
            raise ConfigurationError(f"std_log must be >= {STD_FLOOR}, got {self.std_log}")


def _difference_function(frames: np.ndarray, window: int) -> np.ndarray:
    """
    d(tau) = sum_{j<W} (x_j - x_{j+tau})^2 for every row of ``frames``

    Each row holds W + tau_max samples. Energies come from cumulative sums and
    the cross term from an FFT correlation.
    """
    n_frames, seg_len = frames.shape
    tau_max = seg_len - window
    squares = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames * frames, axis=1)], axis=1)

    head_energy = squares[:, window][:, None]
    lags = np.arange(tau_max + 1)
    lag_energy = squares[:, lags + window] - squares[:, lags]

    n_fft = 1 << int(np.ceil(np.log2(seg_len + window)))
    head = np.zeros_like(frames)
    head[:, :window] = frames[:, :window]
    spectrum = np.conj(np.fft.rfft(head, n_fft, axis=1)) * np.fft.rfft(frames, n_fft, axis=1)
    cross = np.fft.irfft(spectrum, n_fft, axis=1)[:, :tau_max + 1]

    diff = head_energy + lag_energy - 2.0 * cross
    return np.maximum(diff, 0.0)


def _cmnd(diff: np.ndarray) -> np.ndarray:
    """Cumulative mean normalized difference; d'(0) = 1"""
    lags = np.arange(diff.shape[1])
    running = np.cumsum(diff[:, 1:], axis=1)
    out = np.ones_like(diff)
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = diff[:, 1:] * lags[1:] / running
    out[:, 1:] = np.where(running > 0, ratio, 1.0)
    return out


def _pick_period(cmnd_row: np.ndarray, tau_min: int, tau_max: int, threshold: float) -> Optional[float]:
    """First dip below threshold, walked to its local minimum and refined parabolically"""
    below = np.nonzero(cmnd_row[tau_min:tau_max + 1] < threshold)[0]
    if below.size == 0:
        return None
    tau = tau_min + int(below[0])
    while tau + 1 <= tau_max and cmnd_row[tau + 1] < cmnd_row[tau]:
        tau += 1

    if 1 <= tau < cmnd_row.size - 1:
        left, centre, right = cmnd_row[tau - 1], cmnd_row[tau], cmnd_row[tau + 1]
        curvature = left - 2.0 * centre + right
        if curvature > 0:
            return tau + 0.5 * (left - right) / curvature
    return float(tau)


def extract_f0(audio: AudioBuffer, cfg: TrackerConfig = TrackerConfig()) -> F0Trajectory:
    """
    Track F0 frame by frame with the cumulative-mean-normalized difference function

    Args:
        audio (AudioBuffer): mono input
        cfg (TrackerConfig): tracker bounds, threshold and framing

    Returns:
        F0Trajectory: Hz per frame, 0.0 on unvoiced frames
    """
    rate = audio.sample_rate
    window = int(round(cfg.window * rate))
    hop = int(round(cfg.hop * rate))
    if window < 2 or hop < 1:
        raise ConfigurationError("window and hop are too short for this sample rate")
    if audio.samples.size < window:
        raise ShapeError(
            f"audio has {audio.samples.size} samples, shorter than one {window}-sample window"
        )

    tau_min = max(2, int(np.floor(rate / cfg.f_max)))
    tau_max = int(np.ceil(rate / cfg.f_min))

    n_frames = 1 + (audio.samples.size - window) // hop
    padded = np.concatenate([audio.samples, np.zeros(tau_max + 1)])
    segments = sliding_window_view(padded, window + tau_max + 1)[::hop][:n_frames]

    rms = np.sqrt(np.mean(segments[:, :window] ** 2, axis=1))
    cmnd = _cmnd(_difference_function(segments, window))

    values = np.zeros(n_frames)
    for n in range(n_frames):
        if rms[n] < cfg.silence_rms:
            continue
        period = _pick_period(cmnd[n], tau_min, tau_max, cfg.threshold)
        if period is not None and period > 0:
            values[n] = np.clip(rate / period, cfg.f_min, cfg.f_max)

    logger.debug(f"Tracked {n_frames} frames, {int((values > 0).sum())} voiced")
    return F0Trajectory(values, hop=hop / rate, window=window / rate)


def compute_norm_stats(trajectories: Iterable[F0Trajectory]) -> NormStats:
    """
    Pool ln(F0) over every voiced frame of every trajectory

    Values are sorted before reduction so the result does not depend on the
    order of utterances or frames.
    """
    voiced = [np.asarray(t.values, dtype=np.float64)[t.voiced] for t in trajectories]
    pooled = np.concatenate(voiced) if voiced else np.empty(0)
    if pooled.size == 0:
        raise NoVoicedFramesError("no voiced frames for normalization")

    log_f0 = np.sort(np.log(pooled))
    mean_log = float(np.mean(log_f0))
    std_log = float(np.sqrt(np.mean((log_f0 - mean_log) ** 2)))
    return NormStats(mean_log=mean_log, std_log=max(std_log, STD_FLOOR))


def normalize(f0_hz: ArrayLike, stats: NormStats) -> ArrayLike:
    """(ln f0 - mean_log) / std_log; f0 must be positive"""
    values = np.asarray(f0_hz, dtype=np.float64)
    if np.any(~(values > 0)):
        raise DomainError("normalize requires F0 > 0")
    out = (np.log(values) - stats.mean_log) / stats.std_log
    return float(out) if out.ndim == 0 else out


def denormalize(y: ArrayLike, stats: NormStats) -> ArrayLike:
    """exp(mean_log + std_log * y), the inverse of normalize()"""
    out = np.exp(stats.mean_log + stats.std_log * np.asarray(y, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def gate_output(pred_norm: ArrayLike, voicing_prob: ArrayLike, stats: NormStats) -> ArrayLike:
    """
    Pass the denormalized prediction through where voicing_prob > 0.5, else 0.0

    Works element-wise on arrays; the boundary 0.5 itself is unvoiced.
    """
    prob = np.asarray(voicing_prob, dtype=np.float64)
    hz = np.where(prob > 0.5, denormalize(pred_norm, stats), 0.0)
    return float(hz) if hz.ndim == 0 else hz


def gate_logits(pred_norm: ArrayLike, voicing_logit: ArrayLike, stats: NormStats) -> ArrayLike:
    """
    Same gating as gate_output, decided on the raw voicing logit

    logit > 0 is exactly sigmoid(logit) > 0.5, without the rounding of the
    sigmoid to 0.5 for tiny positive logits.
    """
    logit = np.asarray(voicing_logit, dtype=np.float64)
    hz = np.where(logit > 0, denormalize(pred_norm, stats), 0.0)
    return float(hz) if hz.ndim == 0 else hz


def read_wav(path: str, expected_rate: Optional[int] = None) -> AudioBuffer:
    """
    Read a mono 16-bit PCM or 32-bit float WAV file

    Args:
        path (str): WAV path
        expected_rate (int, optional): required sample rate; no resampling is done

    Returns:
        AudioBuffer: samples scaled to [-1, 1]
    """
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ShapeError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ConfigurationError(f"{path}: unsupported sample format {data.dtype}")
    if expected_rate is not None and rate != expected_rate:
        raise ConfigurationError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")

    logger.info(f"Loaded {path}: {samples.size} samples at {rate} Hz")
    return AudioBuffer(samples, rate)


def write_wav(audio: AudioBuffer, path: str, pcm16: bool = True) -> None:
    """Write mono audio as 16-bit PCM (default) or 32-bit float"""
    if pcm16:
        data = np.clip(np.round(audio.samples * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = audio.samples.astype(np.float32)
    with atomic_write(path, 'wb') as handle:
        wavfile.write(handle, audio.sample_rate, data)


def synth_tone(freq_hz: float, duration_s: float = 1.0,
               sample_rate: int = Config.DEFAULT_SAMPLE_RATE, amplitude: float = 0.5) -> AudioBuffer:
    """Pure sinusoid, the analytic reference signal for the tracker"""
    if freq_hz <= 0 or duration_s <= 0:
        raise ConfigurationError("tone frequency and duration must be positive")
    if not 0 < amplitude <= 1:
        raise ConfigurationError(f"amplitude must lie in (0, 1], got {amplitude}")
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    return AudioBuffer(amplitude * np.sin(2.0 * np.pi * freq_hz * t), sample_rate)
