#!/usr/bin/env python3
"""Run the three quadratic benchmark studies and write their CSVs.

Equivalent to the quad-condition, sample-size, and quad-dimension CLI
subcommands with benchmark defaults; kept as a script so the full sweep is
one command.
"""
import argparse
import os

from resopt.experiments import (
    default_spec,
    run_study,
    write_histogram_csv,
    write_summary_csv,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/quadratic")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--parallel", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    jobs = [
        ("condition_xi2", default_spec("condition", seed=args.seed, J=args.reps)),
        ("condition_xi0", default_spec("condition", xi=0, eps0=0.04, T0=150.0,
                                       seed=args.seed, J=args.reps)),
        ("sample_size", default_spec("sample_size", seed=args.seed, J=args.reps)),
        ("dimension", default_spec("dimension", seed=args.seed, J=args.reps)),
    ]
    os.makedirs(args.out, exist_ok=True)
    for name, spec in jobs:
        result = run_study(spec, parallel=args.parallel)
        write_summary_csv(os.path.join(args.out, f"{name}_summary.csv"), result)
        write_histogram_csv(os.path.join(args.out, f"{name}_hist.csv"), result)
        print(f"== {name} ==")
        for label in result.labels:
            s = result.summaries[label]
            print(f"  {label}: mean={s.mean:.6g} median={s.median:.6g} "
                  f"std={s.std:.6g} failures={s.failures}")


if __name__ == "__main__":
    main()
