"""Experiment orchestration: data -> linear fit -> init -> optimize grids.

A pipeline run sweeps the (lambda, neuron count, seed) grid, records
initialized and optimized RMSE per cell, and picks a best model either
by optimized validation RMSE or — the time-saving protocol — by the
validation RMSE of the initialized models (``select_at_init``).

The comparison experiment pits three starting points against each other
under an identical, deliberately fixed optimization budget:
Linear/Random (random neuron positions, zero amplitudes), Linear/MLP
(fitted positions, zero amplitudes), and the full proposed
initialization.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field

import joblib
import numpy as np

from .bench import WhConfig, generate_wh, load_benchmark
from .errors import ConfigError, DivergenceError, IdentificationError
from .lm import LmSettings
from .lti import LtiModel, estimate_bla, rmse, simulate_lti
from .nlss import (NlssModel, assemble_initialized, optimize_nlss,
                   save_trace_csv, simulate_nlss)
from .nonlin import TanhNet
from .records import IoRecord
from .state_estimator import estimate_state

log = logging.getLogger(__name__)

_RANDOM_ARM_KEY = 7919   # stream tag for Linear/Random position draws


@dataclass
class PipelineConfig:
    data: dict = field(default_factory=lambda: {"generate": {}})
    n_x: int = 6
    lambda_grid: list = field(default_factory=lambda: [0.1, 0.5, 1.0, 5.0, 10.0])
    n_grid: list = field(default_factory=lambda: [1, 2, 3])
    n_restarts: int = 5
    seeds: list | None = None
    lm_max_iter: int = 100
    compare_max_iter: int = 50
    static_max_iter: int = 200
    select_at_init: bool = False
    init_only: bool = False
    compare_n: int | None = None
    compare_lambda: float | None = None
    fir_taps: int | None = None
    jobs: int = 1
    out_dir: str = "runs"

    def __post_init__(self):
        if self.seeds is None:
            self.seeds = list(range(self.n_restarts))
        if "generate" in self.data:
            # Resolve generator defaults now so the recorded config pins
            # every value a rerun needs.
            resolved = WhConfig.from_dict(self.data["generate"])
            self.data = {"generate": resolved.to_dict()}
        self.validate()

    def validate(self):
        if not self.lambda_grid:
            raise ConfigError("lambda grid must be non-empty")
        if any(l <= 0 for l in self.lambda_grid):
            raise ConfigError("lambda grid entries must be positive")
        if not self.n_grid:
            raise ConfigError("neuron-count grid must be non-empty")
        if any(n < 0 for n in self.n_grid):
            raise ConfigError("neuron counts must be >= 0")
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")
        if self.n_x < 1:
            raise ConfigError(f"n_x must be >= 1, got {self.n_x}")
        keys = set(self.data.keys())
        if "generate" in keys:
            WhConfig.from_dict(self.data["generate"])   # raises if invalid
        elif "file" in keys:
            path = self.data["file"]
            if not os.path.exists(path):
                raise ConfigError(f"data file not found: {path}")
            for req in ("n_est", "n_val"):
                if req not in self.data:
                    raise ConfigError(f"file data source needs '{req}'")
        else:
            raise ConfigError(
                "data source must contain either 'generate' or 'file'")

    def to_dict(self) -> dict:
        return {"data": self.data, "n_x": self.n_x,
                "lambda_grid": list(self.lambda_grid),
                "n_grid": list(self.n_grid),
                "n_restarts": self.n_restarts,
                "seeds": list(self.seeds),
                "lm_max_iter": self.lm_max_iter,
                "compare_max_iter": self.compare_max_iter,
                "static_max_iter": self.static_max_iter,
                "select_at_init": self.select_at_init,
                "init_only": self.init_only,
                "compare_n": self.compare_n,
                "compare_lambda": self.compare_lambda,
                "fir_taps": self.fir_taps,
                "jobs": self.jobs,
                "out_dir": self.out_dir}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "generate" in d.get("data", {}):
            d = dict(d)
            d["data"] = {"generate": dict(d["data"]["generate"])}
        return cls(**d)

    def load_data(self):
        """Materialize the (estimation, validation) records."""
        if "generate" in self.data:
            cfg = WhConfig.from_dict(self.data["generate"])
            est, val, _ = generate_wh(cfg)
            return est, val
        src = self.data
        return load_benchmark(
            src["file"], src["n_est"], src["n_val"],
            est_offset=src.get("est_offset", 0),
            val_offset=src.get("val_offset"),
            remove_dc=src.get("remove_dc", False))


@dataclass
class CellResult:
    lam: float
    n_f: int
    n_g: int
    seed: int
    rmse_init_est: float = np.nan
    rmse_init_val: float = np.nan
    rmse_opt_est: float = np.nan
    rmse_opt_val: float = np.nan
    status: str = "error"
    message: str = ""
    model: NlssModel | None = None
    trace: list = field(default_factory=list)


@dataclass
class RunReport:
    config: PipelineConfig
    bla: LtiModel
    bla_rmse_est: float
    bla_rmse_val: float
    cells: list
    best: CellResult | None

    @property
    def fully_failed(self) -> bool:
        return all(c.status not in ("ok", "stalled") for c in self.cells)


def _val_rmse_lti(model, record):
    y_hat, _ = simulate_lti(model, record.u)
    return rmse(y_hat, record.y)


def _nlss_rmse(model, record):
    y_hat, _ = simulate_nlss(model, record.u)
    return rmse(y_hat, record.y)


def _run_cell(bla, traj, est, val, lam, n_f, n_g, seed, config) -> CellResult:
    """One grid cell; every RMSE that can be computed is recorded even
    when a later stage fails."""
    cell = CellResult(lam=lam, n_f=n_f, n_g=n_g, seed=seed)
    try:
        model = assemble_initialized(bla, traj, est, n_f, n_g, seed,
                                     static_max_iter=config.static_max_iter)
        cell.rmse_init_est = _nlss_rmse(model, est)
        cell.rmse_init_val = _nlss_rmse(model, val)
        cell.model = model
        cell.status = "ok"
        if not config.init_only:
            result = optimize_nlss(model, est,
                                   LmSettings(max_iter=config.lm_max_iter))
            cell.model = result.model
            cell.trace = result.trace
            cell.rmse_opt_est = _nlss_rmse(result.model, est)
            cell.rmse_opt_val = _nlss_rmse(result.model, val)
            cell.status = "ok" if result.status != "stalled" else "stalled"
    except DivergenceError as err:
        cell.status = "diverged"
        cell.message = str(err)
    except IdentificationError as err:
        cell.status = "error"
        cell.message = str(err)
    return cell


def _selection_key(config):
    if config.init_only or config.select_at_init:
        return lambda c: c.rmse_init_val
    return lambda c: c.rmse_opt_val


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Execute the full grid; per-cell failures never abort other cells."""
    config.validate()
    est, val = config.load_data()
    bla = estimate_bla(est, config.n_x, fir_taps=config.fir_taps)
    bla_est = _val_rmse_lti(bla, est)
    bla_val = _val_rmse_lti(bla, val)
    log.info("linear fit: estimation RMSE %.4g, validation RMSE %.4g",
             bla_est, bla_val)

    trajs = {}
    traj_errors = {}
    for lam in config.lambda_grid:
        try:
            trajs[lam] = estimate_state(est, bla, lam)
        except IdentificationError as err:
            traj_errors[lam] = str(err)

    tasks = [(lam, n, n, seed)
             for lam in config.lambda_grid
             for n in config.n_grid
             for seed in config.seeds]
    runnable = [t for t in tasks if t[0] in trajs]
    if config.jobs != 1 and len(runnable) > 1:
        done = joblib.Parallel(n_jobs=config.jobs)(
            joblib.delayed(_run_cell)(bla, trajs[lam], est, val,
                                      lam, n_f, n_g, seed, config)
            for lam, n_f, n_g, seed in runnable)
    else:
        done = [_run_cell(bla, trajs[lam], est, val, lam, n_f, n_g, seed,
                          config)
                for lam, n_f, n_g, seed in runnable]
    by_key = {(c.lam, c.n_f, c.n_g, c.seed): c for c in done}

    cells = []
    for lam, n_f, n_g, seed in tasks:
        if lam in trajs:
            cells.append(by_key[(lam, n_f, n_g, seed)])
        else:
            cells.append(CellResult(lam=lam, n_f=n_f, n_g=n_g, seed=seed,
                                    status="error",
                                    message=traj_errors[lam]))

    key = _selection_key(config)
    ok_cells = [c for c in cells if c.status == "ok"
                and np.isfinite(key(c))]
    best = min(ok_cells, key=key) if ok_cells else None
    return RunReport(config=config, bla=bla, bla_rmse_est=bla_est,
                     bla_rmse_val=bla_val, cells=cells, best=best)


@dataclass
class ArmResult:
    arm: str
    seed: int
    rmse_val: float = np.nan
    status: str = "error"
    message: str = ""


@dataclass
class ComparisonReport:
    config: PipelineConfig
    bla_rmse_val: float
    arms: list                    # list of ArmResult

    def arm_values(self, arm: str):
        return [a.rmse_val for a in self.arms
                if a.arm == arm and np.isfinite(a.rmse_val)]

    def summary(self) -> dict:
        out = {}
        for arm in ("random", "mlp", "proposed"):
            vals = self.arm_values(arm)
            out[arm] = {
                "mean": float(np.mean(vals)) if vals else np.nan,
                "std": float(np.std(vals)) if vals else np.nan,
                "median": float(np.median(vals)) if vals else np.nan,
                "n_ok": len(vals),
            }
        return out


def zero_amplitudes(model: NlssModel) -> NlssModel:
    """Copy of the model with both nets' amplitude weights set to zero."""
    return NlssModel(
        lin=model.lin,
        f_nl=TanhNet(model.f_nl.W_pos.copy(), model.f_nl.b_pos.copy(),
                     np.zeros_like(model.f_nl.W_amp)),
        g_nl=TanhNet(model.g_nl.W_pos.copy(), model.g_nl.b_pos.copy(),
                     np.zeros_like(model.g_nl.W_amp)),
        x0=model.x0.copy())


def _random_positions_model(bla: LtiModel, n_f: int, n_g: int,
                            seed: int) -> NlssModel:
    rng = np.random.default_rng(np.random.SeedSequence([_RANDOM_ARM_KEY,
                                                        seed]))
    n_in = bla.n_x + bla.n_u
    f_nl = TanhNet(rng.uniform(-1, 1, (n_f, n_in)),
                   rng.uniform(-1, 1, n_f), np.zeros((bla.n_x, n_f)))
    g_nl = TanhNet(rng.uniform(-1, 1, (n_g, n_in)),
                   rng.uniform(-1, 1, n_g), np.zeros((bla.n_y, n_g)))
    return NlssModel(lin=bla, f_nl=f_nl, g_nl=g_nl, x0=np.zeros(bla.n_x))


def _run_arm(arm, model, est, val, settings) -> tuple:
    try:
        result = optimize_nlss(model, est, settings)
        y_v, _ = simulate_nlss(result.model, val.u)
        return rmse(y_v, val.y), ("ok" if result.status != "stalled"
                                  else "stalled"), ""
    except DivergenceError as err:
        return np.nan, "diverged", str(err)
    except IdentificationError as err:
        return np.nan, "error", str(err)


def run_init_comparison(config: PipelineConfig) -> ComparisonReport:
    """Optimize the three initialization arms under one fixed budget."""
    config.validate()
    if len(config.seeds) < 10:
        raise ConfigError(
            f"comparison needs >= 10 restarts, got {len(config.seeds)}")
    est, val = config.load_data()
    n = config.compare_n if config.compare_n is not None else config.n_grid[-1]
    lam = (config.compare_lambda if config.compare_lambda is not None
           else config.lambda_grid[0])
    bla = estimate_bla(est, config.n_x, fir_taps=config.fir_taps)
    bla_val = _val_rmse_lti(bla, val)
    traj = estimate_state(est, bla, lam)
    settings = LmSettings(max_iter=config.compare_max_iter)

    jobs = []
    for seed in config.seeds:
        try:
            proposed = assemble_initialized(
                bla, traj, est, n, n, seed,
                static_max_iter=config.static_max_iter)
            jobs.append(("proposed", seed, proposed))
            jobs.append(("mlp", seed, zero_amplitudes(proposed)))
        except IdentificationError as err:
            jobs.append(("proposed", seed, err))
            jobs.append(("mlp", seed, err))
        jobs.append(("random", seed, _random_positions_model(bla, n, n, seed)))

    runnable = [(a, s, m) for a, s, m in jobs if isinstance(m, NlssModel)]
    if config.jobs != 1 and len(runnable) > 1:
        outcomes = joblib.Parallel(n_jobs=config.jobs)(
            joblib.delayed(_run_arm)(arm, model, est, val, settings)
            for arm, seed, model in runnable)
    else:
        outcomes = [_run_arm(arm, model, est, val, settings)
                    for arm, seed, model in runnable]
    by_key = {(arm, seed): out
              for (arm, seed, _), out in zip(runnable, outcomes)}

    arms = []
    for arm, seed, payload in jobs:
        if isinstance(payload, NlssModel):
            r, status, msg = by_key[(arm, seed)]
            arms.append(ArmResult(arm=arm, seed=seed, rmse_val=r,
                                  status=status, message=msg))
        else:
            arms.append(ArmResult(arm=arm, seed=seed, status="error",
                                  message=str(payload)))
    return ComparisonReport(config=config, bla_rmse_val=bla_val, arms=arms)


def _fmt(value) -> str:
    """Full-precision CSV float; empty field for missing values."""
    if value is None or (isinstance(value, float) and not np.isfinite(value)):
        return ""
    return repr(float(value))


def emit_report(report: RunReport, out_dir) -> dict:
    """Write summary.csv, best_model.json, run_config.json, traces, scatter.

    Returns the paths written.  Cell order in summary.csv follows the
    configured grids, independent of execution scheduling.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as err:
        raise ConfigError(f"output directory not writable: {err}") from err

    paths = {}
    summary = os.path.join(out_dir, "summary.csv")
    with open(summary, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lambda", "n_f", "n_g", "seed", "rmse_init_est",
                         "rmse_init_val", "rmse_opt_est", "rmse_opt_val",
                         "status"])
        for c in report.cells:
            writer.writerow([repr(float(c.lam)), c.n_f, c.n_g, c.seed,
                             _fmt(c.rmse_init_est), _fmt(c.rmse_init_val),
                             _fmt(c.rmse_opt_est), _fmt(c.rmse_opt_val),
                             c.status])
    paths["summary"] = summary

    config_path = os.path.join(out_dir, "run_config.json")
    with open(config_path, "w") as fh:
        json.dump(report.config.to_dict(), fh, indent=1)
    paths["run_config"] = config_path

    bla_path = os.path.join(out_dir, "bla_model.json")
    report.bla.save(bla_path)
    paths["bla_model"] = bla_path

    if report.best is not None and report.best.model is not None:
        best_path = os.path.join(out_dir, "best_model.json")
        report.best.model.save(best_path)
        paths["best_model"] = best_path

        comp_path = os.path.join(out_dir, "model_comparison.csv")
        with open(comp_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["model", "rmse_est", "rmse_val"])
            writer.writerow(["linear", _fmt(report.bla_rmse_est),
                             _fmt(report.bla_rmse_val)])
            writer.writerow(["initialized", _fmt(report.best.rmse_init_est),
                             _fmt(report.best.rmse_init_val)])
            writer.writerow(["optimized", _fmt(report.best.rmse_opt_est),
                             _fmt(report.best.rmse_opt_val)])
        paths["model_comparison"] = comp_path

    scatter = os.path.join(out_dir, "scatter.csv")
    with open(scatter, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lambda", "n_f", "n_g", "seed", "stage",
                         "rmse_val"])
        for c in report.cells:
            if np.isfinite(c.rmse_init_val):
                writer.writerow([repr(float(c.lam)), c.n_f, c.n_g, c.seed,
                                 "init", _fmt(c.rmse_init_val)])
            if np.isfinite(c.rmse_opt_val):
                writer.writerow([repr(float(c.lam)), c.n_f, c.n_g, c.seed,
                                 "opt", _fmt(c.rmse_opt_val)])
    paths["scatter"] = scatter

    trace_dir = os.path.join(out_dir, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    model_dir = os.path.join(out_dir, "models")
    os.makedirs(model_dir, exist_ok=True)
    for c in report.cells:
        stem = f"lam{c.lam:g}_nf{c.n_f}_ng{c.n_g}_seed{c.seed}"
        if c.trace:
            save_trace_csv(c.trace, os.path.join(trace_dir,
                                                 f"trace_{stem}.csv"))
        if c.model is not None:
            c.model.save(os.path.join(model_dir, f"model_{stem}.json"))
    paths["traces"] = trace_dir
    paths["models"] = model_dir
    return paths


def emit_comparison(report: ComparisonReport, out_dir) -> dict:
    """Write per-seed and per-arm CSVs for the initialization comparison."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    rows_path = os.path.join(out_dir, "comparison.csv")
    with open(rows_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["arm", "seed", "rmse_opt_val", "status"])
        for a in report.arms:
            writer.writerow([a.arm, a.seed, _fmt(a.rmse_val), a.status])
    paths["comparison"] = rows_path

    summary_path = os.path.join(out_dir, "comparison_summary.csv")
    stats = report.summary()
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["arm", "mean", "std", "median", "n_ok"])
        for arm in ("random", "mlp", "proposed"):
            s = stats[arm]
            writer.writerow([arm, _fmt(s["mean"]), _fmt(s["std"]),
                             _fmt(s["median"]), s["n_ok"]])
    paths["comparison_summary"] = summary_path

    config_path = os.path.join(out_dir, "run_config.json")
    with open(config_path, "w") as fh:
        json.dump(report.config.to_dict(), fh, indent=1)
    paths["run_config"] = config_path
    return paths
