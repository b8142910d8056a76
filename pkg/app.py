#!/usr/bin/env python3
"""
CAMERA accident-anticipation pipeline

Desk-scale multi-modal accident anticipation on synthetic traffic scenarios:
scenario generation, training, evaluation, ablations, alert replay and
gradient checking behind one command line.
"""

import sys

from src.cli import main

if __name__ == '__main__':
    sys.exit(main())
