#!/usr/bin/env python3
"""Run the four replicated benchmark studies and write their result bundles.

Default sizes match the shipped acceptance thresholds; --quick shrinks
everything for a fast smoke run.  Results land under --out (one
subdirectory per study) and are safe to re-run: files holding results
for a different configuration are only replaced with --force.
"""
import argparse
import sys
import time
from pathlib import Path

from kgsa.experiments import REPRODUCERS

DEFAULTS = {
    "ishigami": {"n": 1000, "reps": 50, "seed": 7},
    "stochastic": {"n": 1000, "reps": 50, "seed": 11},
    "sir": {"n": 200, "reps": 50, "seed": 5},
    "categorical": {"n": 1000, "reps": 50, "seed": 3},
}

QUICK = {
    "ishigami": {"n": 128, "reps": 4, "seed": 7},
    "stochastic": {"n": 128, "reps": 4, "seed": 11},
    "sir": {"n": 32, "reps": 4, "seed": 5},
    "categorical": {"n": 128, "reps": 4, "seed": 3},
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("studies", nargs="*", metavar="study",
                        help=f"subset of {sorted(DEFAULTS)} (default: all)")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--quick", action="store_true", help="small smoke-test sizes")
    parser.add_argument("--force", action="store_true", help="overwrite mismatched results")
    args = parser.parse_args(argv)

    unknown = [s for s in args.studies if s not in DEFAULTS]
    if unknown:
        parser.error(f"unknown studies {unknown}; pick from {sorted(DEFAULTS)}")
    names = args.studies or sorted(DEFAULTS)
    sizes = QUICK if args.quick else DEFAULTS
    out_root = Path(args.out)
    for name in names:
        out_dir = out_root / name
        t0 = time.monotonic()
        bundle = REPRODUCERS[name](out_dir, force=args.force, **sizes[name])
        path = bundle.save(out_dir, args.force)
        print(f"{name}: {time.monotonic() - t0:.1f} s -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
