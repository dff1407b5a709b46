"""File formats and run configuration.

Readers reject malformed input with located errors; writers are
deterministic given their inputs. Numeric CSV output uses 17 significant
digits so doubles survive a round trip bit-exactly.
"""

import configparser
import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dfm import PriorConfig
from .errors import ConfigError, DataFormatError

GRID_MAGIC = b"CGSG"
GRID_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def format_float(x):
    return "%.17g" % float(x)


# ---------------------------------------------------------------------------
# delimited series panels

@dataclass
class SeriesDataset:
    times: List[str]          # first column, kept verbatim
    values: np.ndarray        # (n, p) float64
    columns: List[str]        # series names from the header


def load_csv(path):
    """Parse a panel: header row, first column time, remaining numeric."""
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except UnicodeDecodeError as exc:
        raise DataFormatError("file is not valid UTF-8", path=path) from exc
    if not lines:
        raise DataFormatError("empty file", path=path, line=1)
    header = lines[0].split(",")
    if len(header) < 2:
        raise DataFormatError("header needs a time column and at least one "
                              "series", path=path, line=1)
    columns = [name.strip() for name in header[1:]]
    width = len(header)
    times = []
    seen = {}
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise DataFormatError("blank line", path=path, line=lineno)
        cells = line.split(",")
        if len(cells) != width:
            raise DataFormatError(
                f"expected {width} columns, found {len(cells)}",
                path=path, line=lineno)
        stamp = cells[0].strip()
        if stamp in seen:
            raise DataFormatError(
                f"duplicate timestamp '{stamp}' (first at line {seen[stamp]})",
                path=path, line=lineno)
        seen[stamp] = lineno
        parsed = []
        for j, cell in enumerate(cells[1:], start=2):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DataFormatError(
                    f"non-numeric cell '{cell.strip()}' in column {j}",
                    path=path, line=lineno) from None
        times.append(stamp)
        rows.append(parsed)
    if not rows:
        raise DataFormatError("no data rows", path=path, line=1)
    return SeriesDataset(times=times, values=np.array(rows, dtype=float),
                         columns=columns)


def save_csv(path, values, columns=None, times=None, time_label="time"):
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DataFormatError("values must be a matrix", path=str(path))
    n, p = values.shape
    if columns is None:
        columns = [f"s{j + 1}" for j in range(p)]
    if times is None:
        times = [str(t + 1) for t in range(n)]
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(",".join([time_label] + list(columns)) + "\n")
        for t in range(n):
            cells = [str(times[t])]
            cells += [format_float(v) for v in values[t]]
            handle.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# binary grid container

@dataclass
class GridDataset:
    rows: int
    cols: int
    values: np.ndarray                     # (T, rows * cols) float64
    timestamps: Optional[List[str]] = None
    regressors: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataFormatError("grid values must be 2-D (time major)")
        if self.values.shape[1] != self.rows * self.cols:
            raise DataFormatError(
                f"frame width {self.values.shape[1]} != rows*cols "
                f"{self.rows * self.cols}")
        if not np.all(np.isfinite(self.values)):
            raise DataFormatError("grid contains non-finite values")

    @property
    def n_times(self):
        return self.values.shape[0]


def load_grid(path):
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < _HEADER.size:
        raise DataFormatError(
            f"header needs {_HEADER.size} bytes, found {len(blob)}",
            path=path)
    magic, version, rows, cols, n_times = _HEADER.unpack_from(blob)
    if magic != GRID_MAGIC:
        raise DataFormatError(f"bad magic {magic!r}", path=path)
    if version != GRID_VERSION:
        raise DataFormatError(f"unsupported version {version}", path=path)
    expected = _HEADER.size + n_times * rows * cols * 8
    if len(blob) != expected:
        raise DataFormatError(
            f"expected {expected} bytes, found {len(blob)}", path=path)
    values = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).copy()
    return GridDataset(rows=rows, cols=cols,
                       values=values.reshape(n_times, rows * cols))


def save_grid(path, grid):
    header = _HEADER.pack(GRID_MAGIC, GRID_VERSION, grid.rows, grid.cols,
                          grid.n_times)
    payload = np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(payload)


# ---------------------------------------------------------------------------
# run configuration

_DATA_KEYS = {"path", "format", "regressors"}
_MODEL_KEYS = {"components", "theta_mode", "eof_threshold", "loading_path",
               "break_prob", "trend_init_var"}
_MCMC_KEYS = {"iterations", "burn_in", "thin", "seed", "chains", "adapt"}
_OUTPUT_KEYS = {"dir"}
_SIM_KEYS = {"seed", "n_obs", "n_series", "n_regressors", "break_prob",
             "obs_noise_sd", "cycle_scale"}


@dataclass
class FitConfig:
    data_path: str
    data_format: str = "csv"              # csv | grid
    regressors_path: Optional[str] = None
    components: int = 2
    theta_mode: str = "estimate"          # estimate | fixed | eof
    eof_threshold: float = 0.01
    loading_path: Optional[str] = None
    break_prob: float = 0.05
    trend_init_var: float = 1e6
    priors: PriorConfig = field(default_factory=PriorConfig)
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    chains: int = 1
    adapt: bool = True
    out_dir: str = "."


def _get_typed(section, key, cast, problems, where):
    raw = section.get(key)
    if raw is None:
        return None
    try:
        if cast is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError:
        problems.append(f"[{where}] {key}: cannot parse '{raw}' as "
                        f"{cast.__name__}")
        return None


def parse_fit_config(path, overrides=None):
    """Build a FitConfig from an INI-style file, collecting every problem."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from exc

    problems = []
    known = {"data": _DATA_KEYS, "model": _MODEL_KEYS, "priors": None,
             "mcmc": _MCMC_KEYS, "output": _OUTPUT_KEYS}
    prior_fields = {f.name: f for f in dataclasses.fields(PriorConfig)}
    for name in parser.sections():
        if name not in known:
            problems.append(f"unknown section [{name}]")
            continue
        keys = known[name]
        for key in parser[name]:
            if keys is not None and key not in keys:
                problems.append(f"unknown key '{key}' in [{name}]")
            if name == "priors" and key not in prior_fields:
                problems.append(f"unknown prior '{key}'")

    cfg = FitConfig(data_path="")
    data = parser["data"] if parser.has_section("data") else {}
    model = parser["model"] if parser.has_section("model") else {}
    mcmc_sec = parser["mcmc"] if parser.has_section("mcmc") else {}
    output = parser["output"] if parser.has_section("output") else {}

    cfg.data_path = (data.get("path") or "").strip()
    if not cfg.data_path:
        problems.append("[data] path is required")
    fmt = (data.get("format") or "csv").strip().lower()
    if fmt not in ("csv", "grid"):
        problems.append(f"[data] format must be csv or grid, got '{fmt}'")
    cfg.data_format = fmt
    reg = (data.get("regressors") or "").strip()
    cfg.regressors_path = reg or None

    for key, cast, attr in (
        ("components", int, "components"),
        ("eof_threshold", float, "eof_threshold"),
        ("break_prob", float, "break_prob"),
        ("trend_init_var", float, "trend_init_var"),
    ):
        value = _get_typed(model, key, cast, problems, "model")
        if value is not None:
            setattr(cfg, attr, value)
    mode = (model.get("theta_mode") or cfg.theta_mode).strip().lower()
    if mode not in ("estimate", "fixed", "eof"):
        problems.append(
            f"[model] theta_mode must be estimate, fixed, or eof, got "
            f"'{mode}'")
    cfg.theta_mode = mode
    loading_path = (model.get("loading_path") or "").strip()
    cfg.loading_path = loading_path or None
    if mode == "fixed" and not cfg.loading_path:
        problems.append("[model] theta_mode=fixed requires loading_path")

    if parser.has_section("priors"):
        updates = {}
        for key in parser["priors"]:
            if key not in prior_fields:
                continue
            value = _get_typed(parser["priors"], key, float, problems,
                               "priors")
            if value is not None:
                updates[key] = value
        try:
            cfg.priors = dataclasses.replace(cfg.priors, **updates)
        except TypeError as exc:
            problems.append(f"[priors] {exc}")

    for key, cast, attr in (
        ("iterations", int, "iterations"),
        ("burn_in", int, "burn_in"),
        ("thin", int, "thin"),
        ("seed", int, "seed"),
        ("chains", int, "chains"),
        ("adapt", bool, "adapt"),
    ):
        value = _get_typed(mcmc_sec, key, cast, problems, "mcmc")
        if value is not None:
            setattr(cfg, attr, value)

    cfg.out_dir = (output.get("dir") or cfg.out_dir).strip()

    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)

    if cfg.components < 1:
        problems.append("[model] components must be >= 1")
    if not 0.0 < cfg.break_prob < 1.0:
        problems.append("[model] break_prob must lie in (0, 1)")
    if not 0.0 < cfg.eof_threshold <= 1.0:
        problems.append("[model] eof_threshold must lie in (0, 1]")
    if cfg.trend_init_var <= 0.0:
        problems.append("[model] trend_init_var must be positive")
    if cfg.iterations < 0:
        problems.append("[mcmc] iterations must be >= 0")
    if cfg.burn_in < 0:
        problems.append("[mcmc] burn_in must be >= 0")
    if cfg.thin < 1:
        problems.append("[mcmc] thin must be >= 1")
    if cfg.chains < 1:
        problems.append("[mcmc] chains must be >= 1")
    try:
        cfg.priors.validate()
    except ConfigError as exc:
        problems.extend(f"[priors] {p}" for p in exc.problems)

    if problems:
        raise ConfigError(problems)
    return cfg


def parse_sim_config(path):
    """Simulation settings; every key optional, defaults are the study
    design."""
    settings = {}
    if path is None:
        return settings
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from exc
    problems = []
    for name in parser.sections():
        if name != "simulate":
            problems.append(f"unknown section [{name}]")
    if parser.has_section("simulate"):
        section = parser["simulate"]
        for key in section:
            if key not in _SIM_KEYS:
                problems.append(f"unknown key '{key}' in [simulate]")
                continue
            cast = int if key in ("seed", "n_obs", "n_series",
                                  "n_regressors") else float
            value = _get_typed(section, key, cast, problems, "simulate")
            if value is not None:
                settings[key] = value
    if problems:
        raise ConfigError(problems)
    return settings


def config_digest(path):
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()


# ---------------------------------------------------------------------------
# fit output writers

def write_table(path, header, rows):
    """Generic CSV writer: floats at 17 significant digits."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, (float, np.floating)):
                    cells.append(format_float(cell))
                else:
                    cells.append(str(cell))
            handle.write(",".join(cells) + "\n")


def write_params_csv(path, summary_rows):
    write_table(path, ["parameter", "mean", "std", "inefficiency"],
                summary_rows)


def write_breaks_csv(path, label_freq, k):
    """Per-transition break probabilities by component and kind.

    The time column is the 1-based observation index at which the break
    first holds (transition tau affects observation tau + 2), so it runs
    2..n. The final label slot is vacuous and not written.
    """
    from . import simstudy
    prob = simstudy.break_probabilities(label_freq, k)
    n = label_freq.shape[0]
    header = ["time"]
    for i in range(k):
        header += [f"level_c{i + 1}", f"slope_c{i + 1}"]
    rows = []
    for tau in range(n - 1):
        row = [tau + 2]
        for i in range(k):
            row += [prob[(i, "level")][tau], prob[(i, "slope")][tau]]
        rows.append(row)
    write_table(path, header, rows)


def write_paths_csv(path, paths, prefix):
    """Posterior-mean component paths, one row per time point."""
    paths = np.asarray(paths, dtype=float)
    k, n = paths.shape
    header = ["time"] + [f"{prefix}_c{i + 1}" for i in range(k)]
    rows = [[t + 1] + [paths[i, t] for i in range(k)] for t in range(n)]
    write_table(path, header, rows)


def write_loadings_csv(path, loading, series_names=None, grid_shape=None):
    loading = np.asarray(loading, dtype=float)
    p, k = loading.shape
    cols = [f"loading_c{i + 1}" for i in range(k)]
    if grid_shape is not None:
        rows_n, cols_n = grid_shape
        header = ["pixel", "row", "col"] + cols
        rows = [[i, i // cols_n, i % cols_n] + list(loading[i])
                for i in range(p)]
    else:
        if series_names is None:
            series_names = [f"s{i + 1}" for i in range(p)]
        header = ["series"] + cols
        rows = [[series_names[i]] + list(loading[i]) for i in range(p)]
    write_table(path, header, rows)


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)
