#!/usr/bin/env python3
"""Noiseless baseline run: every curve and matrix the pipeline emits when all
noise, shift, and readout contrast limits are switched off. Useful as the
reference against which the device-like runs are compared, and as golden
input for the figure renderer.

Usage: python scripts/ideal_baseline.py [OUTDIR]
"""

import sys

from donor_memory.cli import main as cli_main


def run(outdir="out/ideal"):
    for step in (
        ["state-tomo", "--ideal", "--seed", "1", "--out", outdir],
        ["process-tomo", "--ideal", "--seed", "1", "--out", outdir, "--mc-samples", "64"],
        ["shift-scan", "--ideal", "--seed", "1", "--out", outdir, "--n-delays", "8"],
    ):
        rc = cli_main(step)
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(run(*sys.argv[1:]))
