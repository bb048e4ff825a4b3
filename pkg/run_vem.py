#!/usr/bin/env python3
"""Command-line launcher for the virtual element solver."""

import sys

from vem.cli import main

if __name__ == "__main__":
    sys.exit(main())
