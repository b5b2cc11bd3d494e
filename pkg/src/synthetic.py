"""
Synthetic corpus generator

Speakers belong to a low or a high pitch register. Each utterance gets a smooth
semitone contour and an alternating voicing pattern; BN features carry the
contour and voicing, x-vectors carry the register in one linear block.
"""

from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Tuple
import logging

import numpy as np

from src.config import Config
from src.data_processor import DEFAULT_BN_DIM, DEFAULT_XVEC_DIM, UtteranceRecord
from src.errors import ConfigurationError
from src.pitch import F0Trajectory

logger = logging.getLogger(__name__)

REFERENCE_HZ = 170.0
REGISTER_BLOCK = 8
POSITIONAL_PERIODS = (50.0, 200.0)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic corpus"""
    n_speakers: int = 16
    utterances_per_speaker: int = 40
    frames_per_utterance: int = 200
    low_register_hz: float = 120.0
    high_register_hz: float = 220.0
    register_spread_hz: float = 15.0
    contour_semitones: float = 2.0
    voicing_duty: float = 0.7
    voicing_period_frames: int = 40
    noise_semitones: float = 0.1
    bn_noise: float = 0.01
    bn_dim: int = DEFAULT_BN_DIM
    xvec_dim: int = DEFAULT_XVEC_DIM
    seed: int = 0

    def __post_init__(self):
        for name in ('n_speakers', 'utterances_per_speaker', 'frames_per_utterance', 'voicing_period_frames'):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.bn_dim < 2:
            raise ConfigurationError("bn_dim must be >= 2 (contour and voicing channels)")
        if self.xvec_dim < 2:
            raise ConfigurationError("xvec_dim must be >= 2 (register block and identity)")
        if self.noise_semitones < 0 or self.bn_noise < 0 or self.contour_semitones < 0:
            raise ConfigurationError("noise levels and contour amplitude must be >= 0")
        if not 0.0 <= self.voicing_duty <= 1.0:
            raise ConfigurationError(f"voicing_duty must lie in [0, 1], got {self.voicing_duty}")
        if self.register_spread_hz < 0 or self.low_register_hz - self.register_spread_hz <= 0:
            raise ConfigurationError("register means must stay positive")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SyntheticSpec':
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"Unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**data)


def _register_means(spec: SyntheticSpec, rng: np.random.Generator) -> List[Tuple[str, float]]:
    """Alternate low/high speakers; each mean is jittered uniformly by the spread"""
    out = []
    for s in range(spec.n_speakers):
        group, centre = ('low', spec.low_register_hz) if s % 2 == 0 else ('high', spec.high_register_hz)
        out.append((group, centre + rng.uniform(-spec.register_spread_hz, spec.register_spread_hz)))
    return out


def _speaker_xvec(mean_hz: float, dim: int, rng: np.random.Generator) -> np.ndarray:
    block = min(REGISTER_BLOCK, dim - 1)
    identity = rng.standard_normal(dim - block)
    identity /= np.linalg.norm(identity)
    xvec = np.empty(dim)
    xvec[:block] = np.log(mean_hz) - np.log(REFERENCE_HZ)
    xvec[block:] = identity
    return xvec


def _contour(n_frames: int, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    """Sum of 2-4 slow sinusoids in semitones"""
    t = np.arange(n_frames)
    n_components = int(rng.integers(2, 5))
    contour = np.zeros(n_frames)
    for _ in range(n_components):
        cycles = rng.uniform(0.5, 3.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        contour += np.sin(2.0 * np.pi * cycles * t / n_frames + phase)
    return amplitude * contour / n_components


def _voicing_mask(n_frames: int, duty: float, period: int, rng: np.random.Generator) -> np.ndarray:
    """Alternating voiced/unvoiced runs with the given duty cycle"""
    voiced_len = int(round(duty * period))
    offset = int(rng.integers(0, period))
    return ((np.arange(n_frames) + offset) % period) < voiced_len


def _bn_features(contour: np.ndarray, voiced: np.ndarray, dim: int, noise: float,
                 rng: np.random.Generator) -> np.ndarray:
    n_frames = contour.size
    t = np.arange(n_frames)
    channels = [contour, voiced.astype(np.float64)]
    for period in POSITIONAL_PERIODS:
        channels.append(np.sin(2.0 * np.pi * t / period))
        channels.append(np.cos(2.0 * np.pi * t / period))

    bn = np.zeros((n_frames, dim))
    used = min(dim, len(channels))
    bn[:, :used] = np.stack(channels[:used], axis=1)
    if noise > 0:
        bn += rng.normal(0.0, noise, size=bn.shape)
    return bn


def gen_synthetic(spec: SyntheticSpec) -> List[UtteranceRecord]:
    """
    Generate a deterministic synthetic corpus

    Args:
        spec (SyntheticSpec): corpus parameters including the seed

    Returns:
        List[UtteranceRecord]: speakers in order, utterances in order within a speaker
    """
    rng = np.random.default_rng(spec.seed)
    registers = _register_means(spec, rng)

    corpus = []
    for s, (group, mean_hz) in enumerate(registers):
        speaker_id = f"spk{s:03d}"
        xvec = _speaker_xvec(mean_hz, spec.xvec_dim, rng)
        for u in range(spec.utterances_per_speaker):
            n = spec.frames_per_utterance
            contour = _contour(n, spec.contour_semitones, rng)
            voiced = _voicing_mask(n, spec.voicing_duty, spec.voicing_period_frames, rng)
            jitter = rng.normal(0.0, spec.noise_semitones, size=n) if spec.noise_semitones > 0 else np.zeros(n)
            f0 = np.where(voiced, mean_hz * 2.0 ** ((contour + jitter) / 12.0), 0.0)
            bn = _bn_features(contour, voiced, spec.bn_dim, spec.bn_noise, rng)

            corpus.append(UtteranceRecord(
                utt_id=f"{speaker_id}_utt{u:03d}",
                speaker_id=speaker_id,
                bn=bn,
                xvec=xvec,
                f0=F0Trajectory(f0, hop=Config.FRAME_HOP_S, window=Config.FRAME_WINDOW_S),
                group=group,
            ))

    logger.info(
        f"Generated {len(corpus)} synthetic utterances for {spec.n_speakers} speakers "
        f"(seed={spec.seed})"
    )
    return corpus
