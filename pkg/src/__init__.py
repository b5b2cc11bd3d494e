"""
F0 regressor - frame-level F0 synthesis from linguistic features and speaker embeddings
"""

__version__ = "1.0.0"
