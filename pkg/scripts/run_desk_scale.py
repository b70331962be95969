#!/usr/bin/env python3
"""Drive the whole desk-scale analysis chain with the calibrated device-like
configuration and collect every artifact under one output directory.

Produces the data behind all four figure kinds:
  out/xy_*<state>_*.csv + state_tomo.json      XY tomography before/after storage
  out/process_tomography.json                  chi matrices + fidelity report
  out/decay_*.csv + coherence_fits.json        lifetime scans and fits
  out/shift_scan.csv                           the pulse-induced shift transient

Usage: python scripts/run_desk_scale.py [OUTDIR] [--seed N] [--fast]
"""

import argparse
import sys
import time

from donor_memory.cli import main as cli_main


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("outdir", nargs="?", default="out/desk_scale")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--fast", action="store_true",
                        help="smaller Monte Carlo and scan sizes for a quick look")
    args = parser.parse_args(argv)

    mc = "200" if args.fast else "2000"
    n_list = "1,4,16" if args.fast else "1,4,16,64,256"
    common = ["--device-like", "--seed", str(args.seed), "--out", args.outdir]

    steps = [
        ["state-tomo", *common],
        ["process-tomo", *common, "--mc-samples", mc, "--workers", "2"],
        ["coherence-scan", *common, "--analytic", "--n-list", n_list],
        ["shift-scan", *common, "--analytic"],
    ]
    t0 = time.time()
    for step in steps:
        print(f"$ donor-memory {' '.join(step)}")
        rc = cli_main(step)
        if rc != 0:
            return rc
    print(f"done in {time.time() - t0:.0f} s -> {args.outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
