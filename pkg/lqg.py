#!/usr/bin/env python3
"""
LQG Identification Toolkit - Main Runner Script
Entry point for the lqg command.
"""

import sys
from pathlib import Path

# Add the project root to the Python path
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import main

if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n\nRun interrupted by user.", file=sys.stderr)
        sys.exit(1)
