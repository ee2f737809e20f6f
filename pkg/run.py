#!/usr/bin/env python3
"""
EMA Trigger - Entry Point

Adaptive control-chart triggering of secondary tasks in ecological
momentary assessment studies with incomplete adherence.

Usage:
    python run.py simulate --subjects 1000 --chi 0.19 --output-dir out/sim
    python run.py compare --simulate --subjects 1000 --seed 7 --output-dir out/compare
    python run.py replay --series fixtures/one_subject.csv --algorithm alg2
    python run.py design-grid --N 180 --v 4
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
