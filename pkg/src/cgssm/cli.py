"""Batch command line front end.

Subcommands: simulate (synthetic panel plus ground-truth files), eof
(principal basis of a panel), fit (posterior sampling to CSV outputs),
bench (label-sweep timing grid), diagnose (report and plot-ready files
from a fit directory). Exit codes: 0 success, 2 configuration error,
3 data error, 4 numerical failure.
"""

import argparse
import csv
import datetime
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor

import numba
import numpy as np
import scipy

from . import __version__, benchmark, dfm, io, mcmc, simstudy
from .eof import compute_eof
from .errors import (
    ConfigError,
    DataFormatError,
    NumericalError,
    exit_code_for,
)

FIT_FILES = ("params.csv", "breaks.csv", "trend.csv", "seasonal.csv",
             "loadings.csv", "manifest.json", "draws.npy",
             "draw_names.json", "trend_draws.npy", "seasonal_draws.npy",
             "label_freq.npy", "acceptance.json")


def _worker_cap(requested):
    raw = os.environ.get("CGSSM_THREADS")
    if not raw:
        return requested
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(
            [f"CGSSM_THREADS must be an integer, got '{raw}'"]) from None
    if cap < 1:
        raise ConfigError(["CGSSM_THREADS must be >= 1"])
    return min(requested, cap)


def _load_loading_csv(path):
    """Loading matrix from a CSV whose first column names the series."""
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            rows = list(reader)
    except OSError as exc:
        raise DataFormatError(f"cannot read loading file: {exc}") from exc
    if len(rows) < 2:
        raise DataFormatError(f"{path}: loading file needs a header row "
                              "and at least one data row")
    width = len(rows[0])
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataFormatError(
                f"{path}:{lineno}: expected {width} columns, found "
                f"{len(row)}")
        try:
            out.append([float(cell) for cell in row[1:]])
        except ValueError as exc:
            raise DataFormatError(
                f"{path}:{lineno}: non-numeric loading entry") from exc
    loading = np.array(out, dtype=float)
    if loading.ndim != 2 or loading.shape[1] < 1:
        raise DataFormatError(f"{path}: loading file has no value columns")
    return loading


def _load_panel(cfg):
    """(values, series names, grid shape or None) for a fit config."""
    if cfg.data_format == "grid":
        grid = io.load_grid(cfg.data_path)
        names = [f"px{i}" for i in range(grid.rows * grid.cols)]
        return grid.values, names, (grid.rows, grid.cols)
    dataset = io.load_csv(cfg.data_path)
    if not np.all(np.isfinite(dataset.values)):
        raise DataFormatError(
            "panel contains non-finite values; missing data is unsupported",
            path=cfg.data_path)
    return dataset.values, list(dataset.columns), None


def _load_regressors(cfg, n):
    if cfg.regressors_path is None:
        return np.zeros((n, 0))
    dataset = io.load_csv(cfg.regressors_path)
    if dataset.values.shape[0] != n:
        raise DataFormatError(
            f"regressors have {dataset.values.shape[0]} rows, panel has "
            f"{n}")
    if not np.all(np.isfinite(dataset.values)):
        raise DataFormatError("regressors contain non-finite values",
                              path=cfg.regressors_path)
    return dataset.values


def _chain_seeds(seed, chains):
    if chains == 1:
        return [int(seed)]
    seq = np.random.SeedSequence(int(seed))
    return [int(child.generate_state(1, dtype=np.uint64)[0])
            for child in seq.spawn(chains)]


def _merge_chains(outputs):
    if len(outputs) == 1:
        return outputs[0]
    first = outputs[0]
    draws = {name: np.concatenate([out.draws[name] for out in outputs])
             for name in first.draws}
    acceptance = {name: float(np.mean([out.acceptance[name]
                                       for out in outputs]))
                  for name in first.acceptance}
    return mcmc.ChainOutput(
        draws=draws,
        label_freq=np.mean([out.label_freq for out in outputs], axis=0),
        trend_draws=np.concatenate([out.trend_draws for out in outputs]),
        seasonal_draws=np.concatenate(
            [out.seasonal_draws for out in outputs]),
        include_freq=np.mean([out.include_freq for out in outputs],
                             axis=0),
        loading_mean=np.mean([out.loading_mean for out in outputs],
                             axis=0),
        acceptance=acceptance,
        final_state=outputs[-1].final_state,
        kept=sum(out.kept for out in outputs),
    )


def _manifest(cfg, config_path, spec, p, chains, seeds, out_files):
    return {
        "command": "fit",
        "config_digest": io.config_digest(config_path),
        "seed": cfg.seed,
        "chain_seeds": seeds,
        "chains": chains,
        "iterations": cfg.iterations,
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
        "theta_mode": cfg.theta_mode,
        "n_obs": spec.n,
        "n_series": p,
        "components": spec.n_components,
        "n_regressors": spec.k_r,
        "files": sorted(out_files),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "cgssm": __version__,
        },
        "written_utc": datetime.datetime.now(
            datetime.timezone.utc).isoformat(),
    }


def fit_command(config_path, out_dir=None, chains=None, seed=None):
    """Sample the posterior for a configured panel and write the outputs."""
    overrides = {"out_dir": out_dir, "chains": chains, "seed": seed}
    cfg = io.parse_fit_config(config_path, overrides=overrides)
    y, names, grid_shape = _load_panel(cfg)
    regressors = _load_regressors(cfg, y.shape[0])

    loading = None
    if cfg.theta_mode == "fixed":
        loading = _load_loading_csv(cfg.loading_path)
        if loading.shape[0] != y.shape[1]:
            raise DataFormatError(
                f"loading has {loading.shape[0]} rows, panel has "
                f"{y.shape[1]} series")
    elif cfg.theta_mode == "eof":
        basis = compute_eof(y, threshold=cfg.eof_threshold,
                            k_max=cfg.components)
        loading = basis.theta

    k = loading.shape[1] if loading is not None else cfg.components
    spec = dfm.DfmSpec(
        n_components=k,
        regressors=regressors,
        break_prob=cfg.break_prob,
        priors=cfg.priors,
        trend_init_var=cfg.trend_init_var,
    )

    sampler_mode = "estimate" if cfg.theta_mode == "estimate" else "fixed"
    seeds = _chain_seeds(cfg.seed, cfg.chains)

    def one_chain(chain_seed):
        chain_cfg = mcmc.SamplerConfig(
            iterations=cfg.iterations, burn_in=cfg.burn_in, thin=cfg.thin,
            seed=chain_seed, adapt=cfg.adapt, theta_mode=sampler_mode)
        return mcmc.run_chain(y, spec, chain_cfg, loading=loading)

    if cfg.chains == 1:
        outputs = [one_chain(seeds[0])]
    else:
        with ThreadPoolExecutor(
                max_workers=_worker_cap(cfg.chains)) as pool:
            outputs = list(pool.map(one_chain, seeds))
    merged = _merge_chains(outputs)

    os.makedirs(cfg.out_dir, exist_ok=True)
    path = lambda name: os.path.join(cfg.out_dir, name)
    io.write_params_csv(path("params.csv"), merged.summary_rows())
    io.write_breaks_csv(path("breaks.csv"), merged.label_freq, k)
    io.write_paths_csv(path("trend.csv"), merged.trend_mean(), "trend")
    io.write_paths_csv(path("seasonal.csv"), merged.seasonal_mean(),
                       "seasonal")
    final_loading = merged.loading_mean if sampler_mode == "estimate" \
        else loading
    io.write_loadings_csv(path("loadings.csv"), final_loading,
                          series_names=names, grid_shape=grid_shape)

    draw_names = sorted(merged.draws)
    stacked = np.column_stack([merged.draws[name] for name in draw_names]) \
        if draw_names and merged.kept else np.zeros((0, len(draw_names)))
    np.save(path("draws.npy"), stacked)
    io.write_json(path("draw_names.json"), draw_names)
    np.save(path("trend_draws.npy"), merged.trend_draws)
    np.save(path("seasonal_draws.npy"), merged.seasonal_draws)
    np.save(path("label_freq.npy"), merged.label_freq)
    io.write_json(path("acceptance.json"), {
        "acceptance": merged.acceptance,
        "include_freq": merged.include_freq.tolist(),
        "kept": merged.kept,
    })
    io.write_json(path("manifest.json"),
                  _manifest(cfg, config_path, spec, y.shape[1], cfg.chains,
                            seeds, FIT_FILES))
    return cfg.out_dir


def simulate_command(config_path, out_dir):
    """Generate the synthetic study panel and its ground truth."""
    settings = io.parse_sim_config(config_path)
    study = simstudy.make_study(**settings)
    truth = study.truth
    n, p = study.y.shape
    k = study.spec.n_components
    times = np.arange(1, n + 1)

    os.makedirs(out_dir, exist_ok=True)
    path = lambda name: os.path.join(out_dir, name)
    io.save_csv(path("data.csv"), study.y,
                columns=[f"s{i + 1}" for i in range(p)], times=times)
    if study.spec.k_r:
        io.save_csv(path("regressors.csv"), study.spec.regressors,
                    columns=[f"w{j + 1}" for j in range(study.spec.k_r)],
                    times=times)
    io.write_table(path("true_breaks.csv"),
                   ["component", "kind", "time", "size"],
                   [[ev.component + 1, ev.kind, ev.time, ev.size]
                    for ev in truth.events])
    header = ["time"]
    cols = []
    for name, block in (("trend", truth.trend), ("slope", truth.slope),
                        ("seasonal", truth.seasonal),
                        ("factor", truth.factors)):
        header += [f"{name}_c{i + 1}" for i in range(k)]
        cols.append(block)
    paths_matrix = np.hstack(cols)
    io.write_table(path("true_paths.csv"), header,
                   [[times[t]] + list(paths_matrix[t]) for t in range(n)])
    io.write_loadings_csv(path("true_loadings.csv"), truth.loading,
                          series_names=[f"s{i + 1}" for i in range(p)])
    io.write_json(path("true_params.json"), {
        "damping": [par.damping for par in truth.params_list],
        "frequency": [par.frequency for par in truth.params_list],
        "cycle_scale": [par.scale for par in truth.params_list],
        "coef": truth.coef.tolist(),
        "obs_noise_sd": truth.obs_sd.tolist(),
        "settings": settings,
    })
    return out_dir


def eof_command(data_path, threshold, out_dir, k_max=None):
    """Principal basis of a panel; grid files are detected by magic."""
    with open(data_path, "rb") as handle:
        magic = handle.read(4)
    grid_shape = None
    if magic == io.GRID_MAGIC:
        grid = io.load_grid(data_path)
        values = grid.values
        names = [f"px{i}" for i in range(values.shape[1])]
        grid_shape = (grid.rows, grid.cols)
    else:
        dataset = io.load_csv(data_path)
        values = dataset.values
        names = list(dataset.columns)
    basis = compute_eof(values, threshold=threshold, k_max=k_max)
    os.makedirs(out_dir, exist_ok=True)
    io.write_loadings_csv(os.path.join(out_dir, "basis.csv"), basis.theta,
                          series_names=names, grid_shape=grid_shape)
    io.write_table(os.path.join(out_dir, "explained.csv"),
                   ["component", "explained"],
                   [[i + 1, val] for i, val in enumerate(basis.explained)])
    return out_dir


def bench_command(pgrid, out_dir, sweeps=3, seed=0):
    """Run the naive-versus-projected sweep timings and write them."""
    try:
        grid = [int(tok) for tok in pgrid.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(
            [f"--pgrid must be comma-separated integers, got '{pgrid}'"]
        ) from None
    if len(grid) < 2:
        raise ConfigError(["--pgrid needs at least two panel widths"])
    result = benchmark.run_bench(p_grid=grid, sweeps=sweeps, seed=seed,
                                 progress=lambda pt: print(
                                     f"  p={pt.p} done", flush=True))
    os.makedirs(out_dir, exist_ok=True)
    io.write_table(
        os.path.join(out_dir, "bench.csv"),
        ["p", "loglik", "naive_seconds", "reduced_seconds", "speedup",
         "extrapolated"],
        [[pt.p, pt.loglik, pt.naive_seconds, pt.reduced_seconds,
          pt.speedup, int(pt.naive_extrapolated)] for pt in result.points])
    report = benchmark.format_report(result)
    with open(os.path.join(out_dir, "bench.txt"), "w",
              encoding="utf-8") as handle:
        handle.write(report + "\n")
    print(report)
    return out_dir


def _require(directory, name):
    full = os.path.join(directory, name)
    if not os.path.exists(full):
        raise DataFormatError(
            f"missing fit output '{name}' in {directory}")
    return full


def diagnose_command(directory):
    """Summarize a fit directory into a report and plot-ready tables."""
    draws = np.load(_require(directory, "draws.npy"))
    draw_names = io.load_json(_require(directory, "draw_names.json"))
    accept = io.load_json(_require(directory, "acceptance.json"))
    label_freq = np.load(_require(directory, "label_freq.npy"))
    trend_draws = np.load(_require(directory, "trend_draws.npy"))
    seasonal_draws = np.load(_require(directory, "seasonal_draws.npy"))
    manifest = io.load_json(_require(directory, "manifest.json"))

    k = int(manifest["components"])
    lines = [
        f"fit diagnostics for {directory}",
        f"chains={manifest['chains']} iterations={manifest['iterations']} "
        f"burn_in={manifest['burn_in']} thin={manifest['thin']} "
        f"kept={draws.shape[0]}",
        "",
        f"{'parameter':<22} {'mean':>14} {'sd':>12} {'IF':>8}",
    ]
    for j, name in enumerate(draw_names):
        chain = draws[:, j]
        try:
            ineff = f"{mcmc.inefficiency_factor(chain):.1f}"
        except Exception:
            ineff = "nan"
        lines.append(f"{name:<22} {chain.mean():>14.6g} "
                     f"{chain.std():>12.6g} {ineff:>8}")
    lines.append("")
    lines.append("acceptance rates")
    for name in sorted(accept["acceptance"]):
        lines.append(f"  {name}: {accept['acceptance'][name]:.3f}")
    report_path = os.path.join(directory, "report.txt")
    with open(report_path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")

    def bands(draws_3d, out_name):
        kept, n, k_paths = draws_3d.shape
        qs = np.quantile(draws_3d, [0.05, 0.50, 0.95], axis=0)
        rows = []
        for i in range(k_paths):
            for t in range(n):
                rows.append([t + 1, i + 1, qs[0, t, i], qs[1, t, i],
                             qs[2, t, i]])
        io.write_table(os.path.join(directory, out_name),
                       ["time", "component", "q05", "q50", "q95"], rows)

    bands(trend_draws, "trend_bands.csv")
    bands(seasonal_draws, "seasonal_bands.csv")

    prob = simstudy.break_probabilities(label_freq, k)
    rows = []
    for tau in range(label_freq.shape[0] - 1):
        for i in range(k):
            for kind in ("level", "slope"):
                rows.append([tau + 2, i + 1, kind, prob[(i, kind)][tau]])
    io.write_table(os.path.join(directory, "break_heat.csv"),
                   ["time", "component", "kind", "probability"], rows)
    return directory


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cgssm",
        description="Changepoint detection in multivariate time series "
                    "via conditionally Gaussian state space models.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate the synthetic study")
    sim.add_argument("--config", default=None,
                     help="INI file with a [simulate] section")
    sim.add_argument("--out", required=True, help="output directory")

    eof_p = sub.add_parser("eof", help="principal basis of a panel")
    eof_p.add_argument("--data", required=True,
                       help="CSV panel or binary grid file")
    eof_p.add_argument("--threshold", type=float, default=0.01,
                       help="minimum explained-variance share to keep")
    eof_p.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="sample the posterior for a panel")
    fit.add_argument("--config", required=True)
    fit.add_argument("--out", default=None,
                     help="output directory (overrides [output] dir)")
    fit.add_argument("--chains", type=int, default=None)
    fit.add_argument("--seed", type=int, default=None)

    bench = sub.add_parser("bench", help="time naive vs projected sweeps")
    bench.add_argument("--pgrid", default="5,50,100,500",
                       help="comma-separated panel widths")
    bench.add_argument("--out", required=True)

    diag = sub.add_parser("diagnose",
                          help="report and plot data for a fit directory")
    diag.add_argument("--dir", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            out = simulate_command(args.config, args.out)
        elif args.command == "eof":
            out = eof_command(args.data, args.threshold, args.out)
        elif args.command == "fit":
            out = fit_command(args.config, out_dir=args.out,
                              chains=args.chains, seed=args.seed)
        elif args.command == "bench":
            out = bench_command(args.pgrid, args.out)
        else:
            out = diagnose_command(args.dir)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return exit_code_for(exc)
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0
