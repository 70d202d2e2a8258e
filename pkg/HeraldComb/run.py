#!/usr/bin/env python3
# HeraldComb: runs in a standard CPython 3.9+ environment.
"""Entry script: puts lib/ on sys.path and runs the command line."""

import os
import sys

LIB_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "lib")
if LIB_DIR not in sys.path:
    sys.path.insert(0, LIB_DIR)

from HeraldComb_CLI.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
