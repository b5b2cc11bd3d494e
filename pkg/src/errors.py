"""
Exception hierarchy for the F0 regressor toolkit
"""

from typing import Any, Optional


class F0RegressorError(Exception):
    """Base class for every error raised by this package"""


class ConfigurationError(F0RegressorError, ValueError):
    """Invalid configuration value (dimensions, bounds, probabilities, keys)"""


class ShapeError(F0RegressorError, ValueError):
    """Array, model or trace dimensions do not agree"""


class DomainError(F0RegressorError, ValueError):
    """Scalar outside the domain of an operation"""


class NoVoicedFramesError(F0RegressorError, ValueError):
    """Statistics requested over trajectories with no voiced frame"""


class NumericalError(F0RegressorError, ArithmeticError):
    """Non-finite loss, gradient or metric"""


class CorpusFormatError(F0RegressorError, IOError):
    """Malformed or truncated binary container"""


class InsufficientOverlapError(F0RegressorError, ValueError):
    """Fewer than two mutually voiced frames

    ``partial`` holds whatever the raising operation could still compute.
    """

    def __init__(self, message: str = "insufficient overlap", partial: Optional[Any] = None):
        super().__init__(message)
        self.partial = partial


class StudyError(F0RegressorError, RuntimeError):
    """Hyperparameter study produced no complete trial"""


class EvaluationError(F0RegressorError, RuntimeError):
    """Evaluation skipped every utterance"""
