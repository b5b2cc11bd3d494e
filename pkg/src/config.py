"""
Configuration settings for the F0 regressor toolkit
"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

class Config:
    """Application configuration"""

    # Logging
    LOG_LEVEL = os.getenv('F0R_LOG_LEVEL', 'INFO').upper()
    DEBUG = os.getenv('F0R_DEBUG', 'False').lower() == 'true'

    # Audio front-end
    DEFAULT_SAMPLE_RATE = int(os.getenv('F0R_SAMPLE_RATE', 16000))
    FRAME_HOP_S = float(os.getenv('F0R_FRAME_HOP_S', 0.010))
    FRAME_WINDOW_S = float(os.getenv('F0R_FRAME_WINDOW_S', 0.025))

    # Supported file formats
    CORPUS_EXTENSIONS = {'.f0c': 'container', '.csv': 'csv_manifest'}

    # Evaluation settings
    EVAL_CHUNK_ROWS = int(os.getenv('F0R_EVAL_CHUNK_ROWS', 8192))

    # Tuning settings
    TUNE_MAX_EPOCHS = int(os.getenv('F0R_TUNE_MAX_EPOCHS', 30))

    # Gradient check
    GRADCHECK_TOLERANCE = float(os.getenv('F0R_GRADCHECK_TOLERANCE', 1e-4))

    @classmethod
    def validate_config(cls):
        """Validate configuration settings"""
        errors = []

        if cls.LOG_LEVEL not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            errors.append(f"F0R_LOG_LEVEL must be a logging level name, got {cls.LOG_LEVEL}")

        if cls.DEFAULT_SAMPLE_RATE <= 0:
            errors.append("F0R_SAMPLE_RATE must be positive")

        if cls.FRAME_HOP_S <= 0 or cls.FRAME_WINDOW_S <= 0:
            errors.append("Frame hop and window must be positive")

        if cls.EVAL_CHUNK_ROWS <= 0:
            errors.append("F0R_EVAL_CHUNK_ROWS must be positive")

        if cls.TUNE_MAX_EPOCHS <= 0:
            errors.append("F0R_TUNE_MAX_EPOCHS must be positive")

        if cls.GRADCHECK_TOLERANCE <= 0:
            errors.append("F0R_GRADCHECK_TOLERANCE must be positive")

        return errors
