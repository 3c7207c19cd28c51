"""Convergence experiment: averaged estimators on a Gaussian cubic-response model.

Inputs are ``N(0, I_d)`` and ``y = sum_i (x_i + x_i^3 / 3) + noise``, so the
population optimum is ``w* = 2 * 1``. For each run, method and sample size
``k`` we build ``T_max`` independent estimators and record the squared error
of their running average at ``T = 1, 2, 4, ...``.

``iid`` uses ``k`` i.i.d. labeled points per estimator. ``iid_plus_volume``
uses ``k - d`` i.i.d. points plus ``d`` volume-rescaled points, so both
methods pay ``k`` labels per estimator.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import LabelOracle, PointDistribution, cubic_response
from .errors import ConfigInvalid, InsufficientData
from .estimator import optimum_weights
from .linalg import pseudo_solve_batch
from .rescaled import gaussian_vs_sample_batch

log = logging.getLogger(__name__)

METHODS = ("iid", "iid_plus_volume")
CSV_HEADER = ["method", "k", "T", "run", "error_sq"]


@dataclass
class ExperimentConfig:
    d: int = 5
    k_values: list = field(default_factory=lambda: [5, 10, 20])
    T_max: int = 1024
    runs: int = 50
    seed: int = 0
    methods: list = field(default_factory=lambda: list(METHODS))
    noise_sd: float = 1.0
    output_path: Optional[str] = None

    def validate(self) -> None:
        if self.d < 1:
            raise ConfigInvalid("d must be positive")
        if self.T_max < 1:
            raise ConfigInvalid("T_max must be at least 1")
        if self.runs < 1:
            raise ConfigInvalid("runs must be at least 1")
        if not self.k_values:
            raise ConfigInvalid("k_values is empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ConfigInvalid(f"unknown methods {sorted(unknown)}")
        for k in self.k_values:
            if k < 1:
                raise ConfigInvalid(f"k={k} must be positive")
            if "iid_plus_volume" in self.methods and k < self.d:
                raise ConfigInvalid(f"k={k} < d={self.d} leaves no room for d volume points")
        if self.noise_sd < 0:
            raise ConfigInvalid("noise_sd must be nonnegative")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigInvalid(f"unknown config keys {sorted(extra)}")
        try:
            cfg = cls(**doc)
            cfg.k_values = [int(k) for k in cfg.k_values]
            cfg.methods = list(cfg.methods)
            cfg.d, cfg.T_max, cfg.runs, cfg.seed = int(cfg.d), int(cfg.T_max), int(cfg.runs), int(cfg.seed)
            cfg.noise_sd = float(cfg.noise_sd)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigInvalid("config must be a JSON object")
        return cls.from_dict(doc)


@dataclass(frozen=True, order=True)
class ResultRow:
    method: str
    k: int
    T: int
    run: int
    error_sq: float


@dataclass
class ExperimentResult:
    rows: list
    label_queries: dict

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)


def t_grid(T_max: int) -> list:
    """Powers of two from 1 up to ``T_max``."""
    out = []
    T = 1
    while T <= T_max:
        out.append(T)
        T *= 2
    return out


def _task_seed(seed: int, run: int, method: str, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(run, METHODS.index(method), k))


def replica_estimators(cfg: ExperimentConfig, run: int, method: str, k: int) -> np.ndarray:
    """The ``T_max`` estimators of one (run, method, k) cell, shape ``(T_max, d)``.

    Points and labels come from separate child streams of the cell seed.
    """
    d, T = cfg.d, cfg.T_max
    point_ss, label_ss = _task_seed(cfg.seed, run, method, k).spawn(2)
    pgen = np.random.default_rng(point_ss)
    lgen = np.random.default_rng(label_ss)
    dist = PointDistribution.gaussian(np.eye(d))
    if method == "iid":
        X = pgen.standard_normal((T, k, d))
    else:
        vs = gaussian_vs_sample_batch(dist, d, T, pgen)
        X_iid = pgen.standard_normal((T, k - d, d))
        X = np.concatenate([X_iid, vs], axis=1)
    y = cubic_response(X.reshape(-1, d)).reshape(T, k)
    if cfg.noise_sd > 0:
        y = y + cfg.noise_sd * lgen.standard_normal((T, k))
    return pseudo_solve_batch(X, y)


def _run_cell(cfg: ExperimentConfig, w_star: np.ndarray, run: int, method: str, k: int):
    W = replica_estimators(cfg, run, method, k)
    grid = t_grid(cfg.T_max)
    running = np.cumsum(W, axis=0)
    rows = []
    for T in grid:
        err = running[T - 1] / T - w_star
        rows.append(ResultRow(method, k, T, run, float(err @ err)))
    return rows, cfg.T_max * k


def run_convergence_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run every (run, method, k) cell; output is independent of ``threads``."""
    cfg.validate()
    dist = PointDistribution.gaussian(np.eye(cfg.d))
    w_star = optimum_weights(dist, LabelOracle.cubic(cfg.noise_sd))
    cells = [(r, m, k) for m in cfg.methods for k in cfg.k_values for r in range(cfg.runs)]
    log.info("running %d cells with %d thread(s)", len(cells), threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(lambda c: _run_cell(cfg, w_star, *c), cells))
    else:
        outs = [_run_cell(cfg, w_star, *c) for c in cells]
    rows = []
    queries = {m: 0 for m in cfg.methods}
    for (r, m, k), (cell_rows, q) in zip(cells, outs):
        rows.extend(cell_rows)
        queries[m] += q
    rows.sort(key=lambda row: (METHODS.index(row.method), row.k, row.T, row.run))
    return ExperimentResult(rows, queries)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.method, r.k, r.T, r.run, repr(r.error_sq)])
    return buf.getvalue()


def median_curve(rows, method: str, k: int) -> dict:
    """Median error over runs at each ``T``."""
    by_T: dict = {}
    for r in rows:
        if r.method == method and r.k == k:
            by_T.setdefault(r.T, []).append(r.error_sq)
    return {T: float(np.median(v)) for T, v in sorted(by_T.items())}


def fit_loglog_slope(rows, method: str, k: int) -> float:
    """OLS slope of ``ln(median error)`` against ``ln T``."""
    curve = median_curve(rows, method, k)
    if len(curve) < 4:
        raise InsufficientData(f"need at least 4 distinct T values, got {len(curve)}")
    T = np.array(list(curve), dtype=float)
    e = np.array(list(curve.values()))
    if np.any(e <= 0):
        raise InsufficientData("median error is zero; slope undefined")
    slope, _ = np.polyfit(np.log(T), np.log(e), 1)
    return float(slope)


def gnuplot_data(rows, cfg: ExperimentConfig) -> str:
    """Whitespace-separated medians, one block per (method, k)."""
    lines = ["# method k T median_error_sq"]
    for m in cfg.methods:
        for k in cfg.k_values:
            for T, med in median_curve(rows, m, k).items():
                lines.append(f"{m} {k} {T} {med!r}")
            lines.append("")
    return "\n".join(lines) + "\n"


def write_outputs(result: ExperimentResult, cfg: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(result.to_csv())
    (out / "medians.dat").write_text(gnuplot_data(result.rows, cfg))
    summary = {
        "config": asdict(cfg),
        "label_queries": result.label_queries,
        "slopes": {},
    }
    for m in cfg.methods:
        for k in cfg.k_values:
            try:
                summary["slopes"][f"{m}/k={k}"] = fit_loglog_slope(result.rows, m, k)
            except InsufficientData:
                summary["slopes"][f"{m}/k={k}"] = None
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
