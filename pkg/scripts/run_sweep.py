#!/usr/bin/env python3
"""Full catalog sweep: comparison CSV + per-network summary.

Usage: python3 scripts/run_sweep.py [OUT_DIR] [--phase backprop|all|...]
Defaults to out/sweep and the backprop phases over all stride>=2 layers.
"""

import sys

from bpim2col.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    out = argv.pop(0) if argv and not argv[0].startswith("-") else "out/sweep"
    sys.exit(main(["sweep", "--out", out, *argv]))
