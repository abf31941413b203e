#!/usr/bin/env python3
"""Run the curve fitting CLI from a source checkout."""

import sys
from pathlib import Path

# Make `src` importable without installing the package
sys.path.insert(0, str(Path(__file__).parent))

if __name__ == "__main__":
    from src.app import main
    main()
