"""Config-driven experiment runners that write plot-ready CSV tables.

Random streams: observations for replicate ``r`` come from
``(seed, 0, r)`` and are shared by every scheme; a filter run uses
``(seed, 1, r * 10**6 + scheme.ordinal)``, so adding schemes to a config
never changes the numbers of the others. Particle and time indices in
output files are one-based.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import yaml

from reshuffle.estimators import ESTIMATORS, LOSSES, estimate, loss
from reshuffle.filters import FilterConfig, bpf
from reshuffle.gibbs import IGPrior, PGConfig, acf, chain_median, particle_gibbs
from reshuffle.models import NLModel, SVModel, log_returns, read_prices, simulate
from reshuffle.selection import SelectionScheme

EXPERIMENTS = ("sv_loss", "nl_loss", "degeneracy", "pg_synthetic", "pg_prices")
DEFAULT_SCHEMES = ("kl_p", "tv_p", "kl_w", "tv_w", "stratified", "systematic", "ml")
FLOAT_FMT = "%.17g"
SCHEME_STREAM_STRIDE = 10**6


class ConfigError(ValueError):
    pass


@dataclass
class PGSettings:
    S: int = 100
    iterations: int = 2000
    burn_in: int = 0
    estimate_window: int = 5000
    max_lag: int = 100
    trajectory_thin: int = 0
    prior_shape: float = 0.001
    prior_rate: float = 0.001
    prices_csv: Optional[str] = None
    start_date: Optional[str] = None
    end_date: Optional[str] = None


@dataclass
class ExperimentConfig:
    experiment: str
    sv: dict = field(default_factory=lambda: {"sigma": 1.0, "beta": 0.5, "phi": 0.91})
    nl_thetas: list = field(default_factory=lambda: [[1.0, 1.0], [10.0, 10.0]])
    S_list: list = field(default_factory=lambda: [500])
    N_list: list = field(default_factory=lambda: [50, 100, 500])
    schemes: list = field(default_factory=lambda: list(DEFAULT_SCHEMES))
    replicates: int = 10
    seed: int = 0
    estimators: list = field(default_factory=lambda: list(ESTIMATORS))
    losses: list = field(default_factory=lambda: list(LOSSES))
    ess_threshold_fraction: float = 0.5
    smoothed_estimates: bool = True
    dump_states: bool = False
    edge_replicates: int = 1
    output_dir: str = "results"
    threads: int = 1
    pg: PGSettings = field(default_factory=PGSettings)

    @property
    def scheme_objects(self) -> list[SelectionScheme]:
        return [SelectionScheme.parse(s) for s in self.schemes]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _known(raw: dict, cls, prefix: str):
    names = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in names:
            _fail(prefix + str(key), "unknown key")


def _positive_int_list(value, path):
    if not isinstance(value, list) or not value:
        _fail(path, "must be a non-empty list")
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            _fail(f"{path}[{i}]", f"must be a positive integer, got {v!r}")


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every field; raises ConfigError naming the offending field."""
    if cfg.experiment not in EXPERIMENTS:
        _fail("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    _positive_int_list(cfg.S_list, "S_list")
    _positive_int_list(cfg.N_list, "N_list")
    if not isinstance(cfg.schemes, list) or not cfg.schemes:
        _fail("schemes", "must be a non-empty list")
    for i, s in enumerate(cfg.schemes):
        try:
            SelectionScheme.parse(str(s))
        except ValueError as exc:
            _fail(f"schemes[{i}]", str(exc))
    if len(set(cfg.schemes)) != len(cfg.schemes):
        _fail("schemes", "duplicate entries")
    for name, allowed in (("estimators", ESTIMATORS), ("losses", LOSSES)):
        values = getattr(cfg, name)
        if not isinstance(values, list) or not values:
            _fail(name, "must be a non-empty list")
        for i, v in enumerate(values):
            if v not in allowed:
                _fail(f"{name}[{i}]", f"must be one of {', '.join(allowed)}, got {v!r}")
    if isinstance(cfg.replicates, bool) or not isinstance(cfg.replicates, int) or cfg.replicates < 1:
        _fail("replicates", f"must be an integer >= 1, got {cfg.replicates!r}")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        _fail("seed", "must be a non-negative 64-bit integer")
    if not 0.0 < float(cfg.ess_threshold_fraction) <= 1.0:
        _fail("ess_threshold_fraction", "must lie in (0, 1]")
    if not isinstance(cfg.threads, int) or cfg.threads < 1:
        _fail("threads", "must be a positive integer")
    if not isinstance(cfg.edge_replicates, int) or cfg.edge_replicates < 0:
        _fail("edge_replicates", "must be a non-negative integer")

    if not isinstance(cfg.sv, dict):
        _fail("sv", "must be a mapping")
    for key in cfg.sv:
        if key not in ("sigma", "beta", "phi"):
            _fail(f"sv.{key}", "unknown key")
    try:
        SVModel(**cfg.sv)
    except (TypeError, ValueError) as exc:
        _fail("sv", str(exc))
    if not isinstance(cfg.nl_thetas, list) or not cfg.nl_thetas:
        _fail("nl_thetas", "must be a non-empty list")
    for i, theta in enumerate(cfg.nl_thetas):
        if not isinstance(theta, list) or len(theta) != 2:
            _fail(f"nl_thetas[{i}]", "must be a pair [sigma2_x, sigma2_y]")
        try:
            NLModel(*map(float, theta))
        except (TypeError, ValueError) as exc:
            _fail(f"nl_thetas[{i}]", str(exc))

    pg = cfg.pg
    for name in ("S", "iterations", "max_lag", "estimate_window"):
        v = getattr(pg, name)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            _fail(f"pg.{name}", f"must be a positive integer, got {v!r}")
    if not isinstance(pg.burn_in, int) or not 0 <= pg.burn_in < pg.iterations:
        _fail("pg.burn_in", "must satisfy 0 <= burn_in < iterations")
    if pg.max_lag >= pg.iterations - pg.burn_in:
        _fail("pg.max_lag", "must be smaller than the number of retained iterations")
    if not isinstance(pg.trajectory_thin, int) or pg.trajectory_thin < 0:
        _fail("pg.trajectory_thin", "must be a non-negative integer")
    for name in ("prior_shape", "prior_rate"):
        if not float(getattr(pg, name)) > 0:
            _fail(f"pg.{name}", "must be positive")
    if cfg.experiment == "pg_prices" and not pg.prices_csv:
        _fail("pg.prices_csv", "required for pg_prices")
    if cfg.experiment == "degeneracy" and len(cfg.N_list) != 1:
        _fail("N_list", "degeneracy runs take exactly one N")
    return cfg


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    _known(raw, ExperimentConfig, "")
    if "experiment" not in raw:
        _fail("experiment", "missing required key")
    raw = dict(raw)
    pg_raw = raw.pop("pg", None) or {}
    if not isinstance(pg_raw, dict):
        _fail("pg", "must be a mapping")
    _known(pg_raw, PGSettings, "pg.")
    if "sv" in raw and isinstance(raw["sv"], dict):
        raw["sv"] = {**ExperimentConfig.__dataclass_fields__["sv"].default_factory(), **raw["sv"]}
    cfg = ExperimentConfig(**raw, pg=PGSettings(**pg_raw))
    return validate_config(cfg)


def parse_config(path) -> ExperimentConfig:
    """Load and validate a YAML experiment config."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    return config_from_dict(raw)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def data_rng(cfg: ExperimentConfig, replicate: int) -> np.random.Generator:
    return _rng(cfg.seed, 0, replicate)


def filter_rng(cfg: ExperimentConfig, replicate: int, scheme: SelectionScheme) -> np.random.Generator:
    return _rng(cfg.seed, 1, replicate * SCHEME_STREAM_STRIDE + scheme.ordinal)


def hash_observations(y) -> str:
    return hashlib.sha256(np.ascontiguousarray(y, dtype=float).tobytes()).hexdigest()


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    params: str
    scheme: str
    S: int
    N: int
    replicate: int
    estimator: str
    loss: str
    value: float

    COLUMNS = ("experiment", "params", "scheme", "S", "N", "replicate", "estimator", "loss", "value")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _map(fn: Callable, tasks: list, threads: int) -> list:
    # results keep task order, so files do not depend on scheduling
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _params_label(model) -> str:
    if isinstance(model, SVModel):
        return f"sigma={model.sigma:g};beta={model.beta:g};phi={model.phi:g}"
    return f"sigma2_x={model.sigma2_x:g};sigma2_y={model.sigma2_y:g}"


def _loss_cell(task):
    cfg, model, N, S, scheme_name, r = task
    scheme = SelectionScheme.parse(scheme_name)
    x, y = simulate(model, N, data_rng(cfg, r))
    rng = filter_rng(cfg, r, scheme)
    out = bpf(model, y, FilterConfig(S, scheme, None, cfg.ess_threshold_fraction), rng)
    threshold = model.transition_noise_std() / 2.0
    label = _params_label(model)
    rows, states = [], {}
    for est in cfg.estimators:
        x_hat = estimate(out, est, rng, smoothed=cfg.smoothed_estimates)
        states[est] = x_hat
        for lk in cfg.losses:
            value = loss(x, x_hat, lk, threshold)
            rows.append(ResultRow(cfg.experiment, label, scheme.name, S, N, r, est, lk, value))
    dump = None
    if cfg.dump_states:
        dump = [
            (label, scheme.name, S, N, r, n + 1, x[n], y[n], *(states[e][n] for e in cfg.estimators))
            for n in range(N)
        ]
    return rows, dump, hash_observations(y)


def _loss_tasks(cfg: ExperimentConfig, models) -> list:
    return [
        (cfg, model, N, S, scheme, r)
        for model in models
        for N in cfg.N_list
        for r in range(cfg.replicates)
        for S in cfg.S_list
        for scheme in cfg.schemes
    ]


def _run_loss(cfg: ExperimentConfig, models, threads: Optional[int] = None):
    tasks = _loss_tasks(cfg, models)
    results = _map(_loss_cell, tasks, threads or cfg.threads)
    rows = [row for cell_rows, _, _ in results for row in cell_rows]
    dumps = [d for _, dump, _ in results if dump for d in dump]
    hashes = [(t[1], t[2], t[5], t[4], h) for t, (_, _, h) in zip(tasks, results)]
    return rows, dumps, hashes


def run_sv_loss(cfg: ExperimentConfig, threads: Optional[int] = None) -> list[ResultRow]:
    """Loss rows on simulated SV data for every (N, replicate, S, scheme, estimator, loss)."""
    rows, _, _ = _run_loss(cfg, [SVModel(**cfg.sv)], threads)
    return rows


def run_nl_loss(cfg: ExperimentConfig, threads: Optional[int] = None) -> list[ResultRow]:
    """As ``run_sv_loss`` on the NL model, once per theta in ``cfg.nl_thetas``."""
    rows, _, _ = _run_loss(cfg, [NLModel(*map(float, t)) for t in cfg.nl_thetas], threads)
    return rows


STATE_DUMP_PREFIX = ("params", "scheme", "S", "N", "replicate", "n", "x_true", "y")


def run_degeneracy(cfg: ExperimentConfig, threads: Optional[int] = None) -> dict:
    """Genealogies of SV filter runs.

    Returns a dict with ``edges`` (scheme, S, replicate, n, child, parent,
    surviving) for the first ``cfg.edge_replicates`` replicates and
    ``distinct`` (scheme, S, replicate, n, distinct time-1 ancestors of the
    population alive at n) for all replicates.
    """
    N = cfg.N_list[0]
    model = SVModel(**cfg.sv)
    tasks = [(cfg, model, N, S, s, r) for r in range(cfg.replicates) for S in cfg.S_list for s in cfg.schemes]
    results = _map(_degeneracy_cell, tasks, threads or cfg.threads)
    edges, distinct = [], []
    for cell_edges, cell_distinct in results:
        edges.extend(cell_edges)
        distinct.extend(cell_distinct)
    return {"edges": edges, "distinct": distinct}


def _degeneracy_cell(task):
    cfg, model, N, S, scheme_name, r = task
    scheme = SelectionScheme.parse(scheme_name)
    _, y = simulate(model, N, data_rng(cfg, r))
    out = bpf(model, y, FilterConfig(S, scheme, None, cfg.ess_threshold_fraction), filter_rng(cfg, r, scheme))
    g = out.genealogy
    counts = g.distinct_ancestor_counts()
    distinct = [(scheme.name, S, r, n + 1, int(counts[n])) for n in range(N)]
    edges = []
    if r < cfg.edge_replicates:
        alive = np.zeros((N, S), dtype=bool)
        lin = g.lineages()
        alive[np.arange(N)[:, None], lin] = True
        for n in range(1, N):
            for child in range(S):
                edges.append((scheme.name, S, r, n + 1, child + 1, int(g.ancestors[n, child]) + 1, int(alive[n, child])))
    return edges, distinct


def _pg_cell(task):
    cfg, y, label, N, S, scheme_name, r = task
    scheme = SelectionScheme.parse(scheme_name)
    pg = cfg.pg
    pcfg = PGConfig(S, pg.iterations, scheme, pg.burn_in, pg.estimate_window,
                    cfg.ess_threshold_fraction, pg.trajectory_thin)
    prior = IGPrior(pg.prior_shape, pg.prior_rate)
    chain = particle_gibbs(y, pcfg, prior, prior, filter_rng(cfg, r, scheme))
    key = (label, scheme.name, S, N, r)
    params = {"sigma2": chain.sigma2, "beta": chain.beta, "phi": chain.phi}

    chain_rows = [(*key, m + 1, chain.sigma2[m], chain.beta2[m], chain.beta[m], chain.phi[m]) for m in range(pg.iterations)]
    kept = {k: v[pg.burn_in:] for k, v in params.items()}
    window = min(pg.estimate_window, pg.iterations - pg.burn_in)
    est_rows = [(*key, k, window, chain_median(v, window)) for k, v in kept.items()]
    acf_rows = []
    for k, v in kept.items():
        try:
            rho = acf(v, pg.max_lag)
        except ValueError:
            rho = np.full(pg.max_lag + 1, np.nan)
        acf_rows.extend((*key, k, lag, rho[lag]) for lag in range(pg.max_lag + 1))
    traj_rows = [
        (*key, int(m) + 1, n + 1, traj[n])
        for m, traj in zip(chain.trajectory_iterations, chain.trajectories)
        for n in range(N)
    ]
    return chain_rows, est_rows, acf_rows, traj_rows


def _pg_datasets(cfg: ExperimentConfig):
    if cfg.experiment == "pg_prices":
        dates, closes = read_prices(cfg.pg.prices_csv)
        lo, hi = cfg.pg.start_date, cfg.pg.end_date
        keep = [(lo is None or d >= lo) and (hi is None or d <= hi) for d in dates]
        closes = closes[np.array(keep)]
        y = log_returns(closes)
        return [(lambda r, y=y: y, "prices", y.size)]
    model = SVModel(**cfg.sv)
    return [
        (lambda r, N=N: simulate(model, N, data_rng(cfg, r))[1], _params_label(model), N)
        for N in cfg.N_list
    ]


def run_pg(cfg: ExperimentConfig, threads: Optional[int] = None) -> dict:
    """Particle Gibbs chains, trailing-window medians and ACFs.

    ``pg_synthetic`` simulates SV data for each N in ``N_list``;
    ``pg_prices`` fits log returns of the configured price CSV.
    """
    tasks = []
    for make_y, label, N in _pg_datasets(cfg):
        for r in range(cfg.replicates):
            y = make_y(r)
            tasks.extend((cfg, y, label, N, cfg.pg.S, s, r) for s in cfg.schemes)
    results = _map(_pg_cell, tasks, threads or cfg.threads)
    out = {"chains": [], "estimates": [], "acf": [], "trajectories": []}
    for chain_rows, est_rows, acf_rows, traj_rows in results:
        out["chains"].extend(chain_rows)
        out["estimates"].extend(est_rows)
        out["acf"].extend(acf_rows)
        out["trajectories"].extend(traj_rows)
    return out


PG_KEY = ("params", "scheme", "S", "N", "replicate")
PG_COLUMNS = {
    "chains": PG_KEY + ("iteration", "sigma2", "beta2", "beta", "phi"),
    "estimates": PG_KEY + ("parameter", "window", "median"),
    "acf": PG_KEY + ("parameter", "lag", "rho"),
    "trajectories": PG_KEY + ("iteration", "n", "x"),
}


def version_string() -> str:
    from reshuffle import __version__

    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run_experiment(cfg: ExperimentConfig, output_dir=None, threads: Optional[int] = None) -> dict[str, Path]:
    """Run ``cfg`` and write its tables plus ``manifest.json``; returns the written paths."""
    out_dir = Path(output_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: dict[str, Path] = {}
    exp = cfg.experiment

    if exp in ("sv_loss", "nl_loss"):
        if exp == "sv_loss":
            models = [SVModel(**cfg.sv)]
        else:
            models = [NLModel(*map(float, t)) for t in cfg.nl_thetas]
        rows, dumps, hashes = _run_loss(cfg, models, threads)
        files["results"] = out_dir / f"{exp}.csv"
        write_csv(files["results"], ResultRow.COLUMNS, [dataclasses.astuple(r) for r in rows])
        files["observations"] = out_dir / f"{exp}_observations.csv"
        write_csv(files["observations"], ("params", "N", "replicate", "scheme", "y_sha256"), sorted(set(hashes)))
        if cfg.dump_states:
            files["states"] = out_dir / f"{exp}_states.csv"
            write_csv(files["states"], STATE_DUMP_PREFIX + tuple(f"est_{e}" for e in cfg.estimators), dumps)
    elif exp == "degeneracy":
        res = run_degeneracy(cfg, threads)
        files["edges"] = out_dir / "degeneracy_edges.csv"
        write_csv(files["edges"], ("scheme", "S", "replicate", "n", "child", "parent", "surviving"), res["edges"])
        files["distinct"] = out_dir / "degeneracy_distinct.csv"
        write_csv(files["distinct"], ("scheme", "S", "replicate", "n", "distinct_ancestors"), res["distinct"])
    else:
        res = run_pg(cfg, threads)
        for name, rows in res.items():
            if name == "trajectories" and not cfg.pg.trajectory_thin:
                continue
            files[name] = out_dir / f"{exp}_{name}.csv"
            write_csv(files[name], PG_COLUMNS[name], rows)

    manifest = {
        "version": version_string(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "threads"},
        "files": {k: p.name for k, p in sorted(files.items())},
    }
    files["manifest"] = out_dir / "manifest.json"
    files["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return files


def summarize(rows: list[ResultRow]) -> dict[tuple, float]:
    """Mean value per (params, scheme, S, N, estimator, loss) over replicates."""
    acc: dict[tuple, list] = {}
    for r in rows:
        acc.setdefault((r.params, r.scheme, r.S, r.N, r.estimator, r.loss), []).append(r.value)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def _finite(v: Any) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v)
