"""Timing harness: naive full-panel label sweeps versus projected sweeps.

The naive path runs the indicator sweep on the raw p-dimensional panel;
the projected path first collapses the panel to the component dimension.
Timings are medians over repeated sweeps; the largest naive point may be
extrapolated from the measured cubic scaling when it would blow the time
budget. Timing columns are measurements and vary run to run; every other
column is deterministic given the seed.
"""

import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import kernels, simstudy


@dataclass
class BenchPoint:
    p: int
    naive_seconds: float
    reduced_seconds: float
    naive_extrapolated: bool
    loglik: float            # deterministic checksum of the panel model

    @property
    def speedup(self):
        return self.naive_seconds / self.reduced_seconds


@dataclass
class BenchResult:
    points: List[BenchPoint]
    slope: float             # log-log naive-time slope, largest points
    n: int
    sweeps: int
    seed: int

    def point(self, p):
        for pt in self.points:
            if pt.p == p:
                return pt
        raise KeyError(p)

    @property
    def reduced_variation(self):
        times = [pt.reduced_seconds for pt in self.points]
        return max(times) / min(times)


def _bench_panel(p, n, seed):
    events = [simstudy.BreakEvent(0, "level", n // 3, 3.0),
              simstudy.BreakEvent(1, "slope", 2 * n // 3, 0.3)]
    study = simstudy.make_study(seed=seed, n_obs=n, n_series=p,
                                n_regressors=2, events=events)
    truth = study.truth
    coef = truth.coef
    full = kernels.structured_from_dfm(
        study.spec, truth.params_list, truth.loading, truth.obs_sd,
        coef=coef)
    return study, full


def _median_sweep_seconds(sm, y, sweeps, seed, build=None):
    """Median wall time of one label sweep; `build` (if given) runs inside
    the timed region, mirroring per-sweep model construction."""
    labels = np.zeros(sm.n if sm is not None else y.shape[0],
                      dtype=np.int64)
    rng = np.random.default_rng(seed)
    times = []
    for _ in range(sweeps):
        start = time.perf_counter()
        model, panel = (build() if build is not None else (sm, y))
        labels, _ = kernels.sweep_structured(model, labels, panel, rng=rng)
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def run_bench(p_grid=(5, 50, 100, 500), n=200, sweeps=3, seed=0,
              naive_budget_seconds=600.0, progress=None):
    """Time naive and projected sweeps over a panel-width grid.

    The naive point at some p is extrapolated (cubic in p from the largest
    measured point) instead of measured when its predicted total exceeds
    naive_budget_seconds.
    """
    p_grid = sorted(int(p) for p in p_grid)
    if len(p_grid) < 2:
        raise ValueError("need at least two grid points")

    # warm the compiled kernels on a tiny panel before any timing
    study, full = _bench_panel(4, 16, seed)
    labels0 = np.zeros(16, dtype=np.int64)
    kernels.sweep_structured(full, labels0, study.y,
                             rng=np.random.default_rng(0))

    points = []
    measured = []      # (p, seconds) for naive fits
    for p in p_grid:
        study, full = _bench_panel(p, n, seed)
        truth = study.truth
        loglik = kernels.filter_loglik_structured(
            full, np.zeros(n, dtype=np.int64), study.y)

        def build_reduced(study=study, truth=truth):
            red = kernels.reduction_for(truth.loading, truth.obs_sd)
            model = kernels.structured_from_dfm(
                study.spec, truth.params_list, truth.loading, truth.obs_sd,
                coef=truth.coef, reduction=red)
            return model, red.transform(study.y)

        reduced_s = _median_sweep_seconds(None, study.y, sweeps, seed,
                                          build=build_reduced)

        predicted = None
        if measured:
            ref_p, ref_s = measured[-1]
            predicted = ref_s * (p / ref_p) ** 3
        if predicted is not None and predicted * (sweeps + 1) > \
                naive_budget_seconds:
            naive_s = predicted
            extrapolated = True
        else:
            # one untimed sweep first: arrays enter cache, allocator warms
            kernels.sweep_structured(full, np.zeros(n, dtype=np.int64),
                                     study.y, rng=np.random.default_rng(0))
            naive_s = _median_sweep_seconds(full, study.y, sweeps, seed)
            measured.append((p, naive_s))
            extrapolated = False
        points.append(BenchPoint(p=p, naive_seconds=naive_s,
                                 reduced_seconds=reduced_s,
                                 naive_extrapolated=extrapolated,
                                 loglik=loglik))
        if progress is not None:
            progress(points[-1])

    top = points[-3:] if len(points) >= 3 else points
    logs = np.log([pt.p for pt in top])
    vals = np.log([pt.naive_seconds for pt in top])
    slope = float(np.polyfit(logs, vals, 1)[0])
    return BenchResult(points=points, slope=slope, n=n, sweeps=sweeps,
                       seed=seed)


def format_report(result):
    lines = [
        f"label-sweep timing, n={result.n}, {result.sweeps} sweeps "
        f"(median), seed={result.seed}",
        f"{'p':>6} {'naive_s':>12} {'reduced_s':>12} {'speedup':>9} "
        f"{'extrapolated':>13}",
    ]
    for pt in result.points:
        lines.append(
            f"{pt.p:>6} {pt.naive_seconds:>12.5f} "
            f"{pt.reduced_seconds:>12.5f} {pt.speedup:>9.1f} "
            f"{str(pt.naive_extrapolated):>13}")
    lines.append(f"naive log-log slope (largest points): "
                 f"{result.slope:.2f}")
    lines.append(f"reduced-path variation across grid: "
                 f"{result.reduced_variation:.2f}x")
    return "\n".join(lines)
