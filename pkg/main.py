#!/usr/bin/env python3
"""
PRCut Toolkit - Main Entry Point
Runs the command-line interface (train, verify, spectral, metrics, ...).
"""

import sys

from prcut.cli import main

if __name__ == "__main__":
    sys.exit(main())
