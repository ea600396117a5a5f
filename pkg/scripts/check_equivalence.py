#!/usr/bin/env python3
"""Long-running equivalence soak: many more randomized geometries than the
default verify run.  Prints the first counterexample if one ever appears.

Usage: python3 scripts/check_equivalence.py [CASES] [SEED]
"""

import sys

from bpim2col.cli import main

if __name__ == "__main__":
    cases = sys.argv[1] if len(sys.argv) > 1 else "5000"
    seed = sys.argv[2] if len(sys.argv) > 2 else "42"
    sys.exit(main(["verify", "--cases", cases, "--seed", seed]))
