#!/usr/bin/env python3
"""Single-layer deep dive: sparsity, both algorithms, oracle check.

Usage: python3 scripts/layer_report.py H/C/N/K/S/P [--phase loss|gradient|all]
"""

import sys

from bpim2col.cli import main

if __name__ == "__main__":
    if len(sys.argv) < 2:
        print(__doc__)
        sys.exit(2)
    layer, rest = sys.argv[1], sys.argv[2:]
    code = main(["sparsity", "--layer", layer])
    if code == 0:
        code = main(["simulate", "--layer", layer, "--algo", "both",
                     "--check", *rest])
    sys.exit(code)
