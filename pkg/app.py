"""
Command-line entry point

Usage: python app.py <command> [options]; see `python app.py --help`.
"""

import sys
import os

# Add src directory to path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
