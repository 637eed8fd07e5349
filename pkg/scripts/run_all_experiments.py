#!/usr/bin/env python3
"""Produce the full set of condition number tables.

Runs every shipped configuration (three dimensions, both dual-norm
variants, both field degrees, plus the adaptive runs in 2d) and writes
one CSV per configuration into the output directory.  With default level
caps the whole sweep takes a few minutes on a laptop.
"""

import argparse
import dataclasses
import itertools
import sys
import time
from pathlib import Path

from quasidiag.experiments import ExperimentConfig, format_row, run_experiment, write_csv


def configurations():
    for dim, space, degree in itertools.product((2, 3, 4), ("hm1", "tilde"), (0, 1)):
        yield ExperimentConfig(dim=dim, space=space, degree=degree)
    for space, degree in itertools.product(("hm1", "tilde"), (0, 1)):
        yield ExperimentConfig(dim=2, space=space, degree=degree, refine="adaptive")


def tag(cfg):
    return f"dim{cfg.dim}_{cfg.space}_p{cfg.degree}_{cfg.refine}"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results",
                        help="directory for the CSV files (default: results)")
    parser.add_argument("--only", default=None,
                        help="run only configurations whose tag contains this substring")
    parser.add_argument("--levels", type=int, default=None,
                        help="override the per-configuration level cap")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    chosen = [cfg for cfg in configurations()
              if args.only is None or args.only in tag(cfg)]
    if not chosen:
        print(f"no configuration matches --only {args.only!r}", file=sys.stderr)
        return 2

    grand_start = time.perf_counter()
    for cfg in chosen:
        if args.levels is not None:
            cfg = dataclasses.replace(cfg, levels=args.levels)
        cfg = dataclasses.replace(cfg, seed=args.seed)
        name = tag(cfg)
        if not args.quiet:
            print(f"== {name}")

        def echo(row):
            if not args.quiet:
                print("   " + format_row(row))

        rows = run_experiment(cfg, row_callback=echo)
        write_csv(rows, out_dir / f"{name}.csv")
    elapsed = time.perf_counter() - grand_start
    if not args.quiet:
        print(f"wrote {len(chosen)} tables to {out_dir} in {elapsed:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
