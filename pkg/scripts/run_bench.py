"""Time the naive full-panel label sweep against the projected one.

The naive sweep filters all p series directly; the projected sweep
first collapses the observation equation to the factor dimension. At
the default grid the largest naive point is estimated from a cubic fit
when running it directly would blow the time budget.
"""

import argparse

from cgssm import benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pgrid", default="5,50,100,500",
                    help="comma-separated panel widths")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--sweeps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--budget", type=float, default=600.0,
                    help="per-point naive time budget in seconds")
    args = ap.parse_args()

    grid = [int(tok) for tok in args.pgrid.split(",")]
    result = benchmark.run_bench(
        p_grid=grid, n=args.n, sweeps=args.sweeps, seed=args.seed,
        naive_budget_seconds=args.budget,
        progress=lambda pt: print(f"  p={pt.p}: naive {pt.naive_seconds:.3f}s"
                                  f"{' (est.)' if pt.naive_extrapolated else ''}"
                                  f" projected {pt.reduced_seconds:.3f}s",
                                  flush=True))
    print()
    print(benchmark.format_report(result))


if __name__ == "__main__":
    main()
