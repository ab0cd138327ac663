"""Command-line interface.

Subcommands cover the full workflow: synthetic data generation (gen),
linear fitting (bla), three-stage initialization (init), joint
refinement (optimize), the full experiment grid (pipeline), the
initialization comparison (compare-init), and model evaluation (eval).

Human-readable output rounds RMSE values to 4 significant digits; CSV
files always carry full precision.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .bench import WhConfig, generate_wh
from .errors import ConfigError, IdentificationError
from .lm import LmSettings
from .lti import LtiModel, estimate_bla, rmse, simulate_lti
from .nlss import (NlssModel, optimize_nlss, assemble_initialized,
                   save_trace_csv, simulate_nlss)
from .pipeline import (PipelineConfig, emit_comparison, emit_report,
                       run_init_comparison, run_pipeline)
from .records import load_record_csv, save_record_csv
from .state_estimator import estimate_state

log = logging.getLogger(__name__)


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _load_model(path):
    """Load either model flavor, telling them apart by their fields."""
    d = _load_json(path)
    if "f_nl" in d:
        return NlssModel.from_dict(d)
    return LtiModel.from_dict(d)


def _simulate_any(model, u):
    if isinstance(model, NlssModel):
        y, _ = simulate_nlss(model, u)
    else:
        y, _ = simulate_lti(model, u)
    return y


def _print_rmse(label, value):
    print(f"{label}: {value:.4g}")


def cmd_gen(args):
    cfg = WhConfig.from_dict(_load_json(args.config)) if args.config \
        else WhConfig()
    if args.seed is not None:
        d = cfg.to_dict()
        d["seed"] = args.seed
        cfg = WhConfig.from_dict(d)
    est, val, truth = generate_wh(cfg)
    os.makedirs(args.out, exist_ok=True)
    save_record_csv(os.path.join(args.out, "est.csv"), est)
    save_record_csv(os.path.join(args.out, "val.csv"), val)
    with open(os.path.join(args.out, "truth.json"), "w") as fh:
        json.dump({"front": truth["front"], "back": truth["back"],
                   "cascade_ss": truth["cascade_ss"].to_dict(),
                   "nonlinearity": truth["nonlinearity"],
                   "nl_params": truth["nl_params"],
                   "noise_std": truth["noise_std"]}, fh, indent=1)
    with open(os.path.join(args.out, "gen_config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1)
    print(f"wrote {est.n_samples} estimation and {val.n_samples} "
          f"validation samples to {args.out}")
    return 0


def cmd_bla(args):
    est = load_record_csv(args.data)
    model = estimate_bla(est, args.n_x, fir_taps=args.fir_taps)
    y_hat, _ = simulate_lti(model, est.u)
    _print_rmse("estimation RMSE", rmse(y_hat, est.y))
    if args.val:
        val = load_record_csv(args.val)
        y_v, _ = simulate_lti(model, val.u)
        _print_rmse("validation RMSE", rmse(y_v, val.y))
    if args.out:
        model.save(args.out)
        print(f"wrote linear model to {args.out}")
    return 0


def cmd_init(args):
    est = load_record_csv(args.data)
    if args.bla:
        bla = _load_model(args.bla)
        if not isinstance(bla, LtiModel):
            raise ConfigError(f"{args.bla} is not a linear model file")
    else:
        bla = estimate_bla(est, args.n_x, fir_taps=args.fir_taps)
    traj = estimate_state(est, bla, args.lam)
    model = assemble_initialized(bla, traj, est, args.n_f, args.n_g,
                                 args.seed)
    y_hat, _ = simulate_nlss(model, est.u)
    _print_rmse("estimation RMSE", rmse(y_hat, est.y))
    if args.val:
        val = load_record_csv(args.val)
        y_v, _ = simulate_nlss(model, val.u)
        _print_rmse("validation RMSE", rmse(y_v, val.y))
    if args.out:
        model.save(args.out)
        print(f"wrote initialized model to {args.out}")
    return 0


def cmd_optimize(args):
    est = load_record_csv(args.data)
    model = _load_model(args.model)
    if not isinstance(model, NlssModel):
        raise ConfigError(f"{args.model} is not a full model file")
    result = optimize_nlss(model, est, LmSettings(max_iter=args.max_iter))
    y_hat, _ = simulate_nlss(result.model, est.u)
    _print_rmse("estimation RMSE", rmse(y_hat, est.y))
    if args.val:
        val = load_record_csv(args.val)
        y_v, _ = simulate_nlss(result.model, val.u)
        _print_rmse("validation RMSE", rmse(y_v, val.y))
    print(f"status: {result.status} after {result.n_iter} iterations")
    if args.out:
        result.model.save(args.out)
        print(f"wrote optimized model to {args.out}")
    if args.trace:
        save_trace_csv(result.trace, args.trace)
        print(f"wrote cost trace to {args.trace}")
    return 0


def _pipeline_config(args):
    cfg = PipelineConfig.from_dict(_load_json(args.config)) if args.config \
        else PipelineConfig()
    if args.out:
        cfg.out_dir = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if getattr(args, "init_only", False):
        cfg.init_only = True
    if getattr(args, "select_at_init", False):
        cfg.select_at_init = True
    if args.seed is not None:
        cfg.seeds = [args.seed + i for i in range(len(cfg.seeds))]
    return cfg


def cmd_pipeline(args):
    cfg = _pipeline_config(args)
    report = run_pipeline(cfg)
    paths = emit_report(report, cfg.out_dir)
    _print_rmse("linear validation RMSE", report.bla_rmse_val)
    n_ok = sum(1 for c in report.cells if c.status == "ok")
    print(f"grid: {n_ok}/{len(report.cells)} cells ok")
    if report.best is not None:
        b = report.best
        print(f"best cell: lambda={b.lam:g} n_f={b.n_f} n_g={b.n_g} "
              f"seed={b.seed}")
        _print_rmse("best initialized validation RMSE", b.rmse_init_val)
        if not cfg.init_only:
            _print_rmse("best optimized validation RMSE", b.rmse_opt_val)
    print(f"wrote report to {paths['summary']}")
    if report.fully_failed:
        print("all grid cells failed", file=sys.stderr)
        return 1
    return 0


def cmd_compare_init(args):
    cfg = _pipeline_config(args)
    report = run_init_comparison(cfg)
    paths = emit_comparison(report, cfg.out_dir)
    _print_rmse("linear validation RMSE", report.bla_rmse_val)
    stats = report.summary()
    for arm in ("random", "mlp", "proposed"):
        s = stats[arm]
        print(f"{arm:>8}: mean {s['mean']:.4g}  std {s['std']:.4g}  "
              f"median {s['median']:.4g}  ({s['n_ok']} ok)")
    print(f"wrote comparison to {paths['comparison']}")
    if all(not report.arm_values(a) for a in ("random", "mlp", "proposed")):
        print("all comparison arms failed", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args):
    record = load_record_csv(args.data)
    model = _load_model(args.model)
    y_hat = _simulate_any(model, record.u)
    value = rmse(y_hat, record.y)
    _print_rmse("RMSE", value)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        out_path = os.path.join(args.out, "eval.json")
        with open(out_path, "w") as fh:
            json.dump({"model": os.path.abspath(args.model),
                       "data": os.path.abspath(args.data),
                       "n_samples": record.n_samples,
                       "rmse": value}, fh, indent=1)
        print(f"wrote evaluation to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlssid",
        description="Nonlinear state-space identification tools")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="enable info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic benchmark dataset")
    p.add_argument("--config", help="generator config JSON")
    p.add_argument("--seed", type=int, help="override the generator seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bla", help="fit a linear state-space model")
    p.add_argument("--data", required=True, help="estimation record CSV")
    p.add_argument("--n-x", type=int, default=6, help="model order")
    p.add_argument("--fir-taps", type=int, default=None,
                   help="impulse-response length for the first stage")
    p.add_argument("--val", help="validation record CSV")
    p.add_argument("--out", help="output model JSON")
    p.set_defaults(func=cmd_bla)

    p = sub.add_parser("init", help="build an initialized nonlinear model")
    p.add_argument("--data", required=True, help="estimation record CSV")
    p.add_argument("--bla", help="linear model JSON (fit fresh if absent)")
    p.add_argument("--n-x", type=int, default=6, help="model order")
    p.add_argument("--fir-taps", type=int, default=None)
    p.add_argument("--lam", type=float, default=0.1,
                   help="state-equation weight")
    p.add_argument("--n-f", type=int, default=3,
                   help="state-update hidden neurons")
    p.add_argument("--n-g", type=int, default=3,
                   help="output hidden neurons")
    p.add_argument("--seed", type=int, default=0,
                   help="neuron placement seed")
    p.add_argument("--val", help="validation record CSV")
    p.add_argument("--out", help="output model JSON")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("optimize", help="refine a model on simulation error")
    p.add_argument("--data", required=True, help="estimation record CSV")
    p.add_argument("--model", required=True, help="model JSON to refine")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--val", help="validation record CSV")
    p.add_argument("--out", help="output model JSON")
    p.add_argument("--trace", help="cost trace CSV path")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("pipeline", help="run the full experiment grid")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int,
                   help="rebase restart seeds at this value")
    p.add_argument("--init-only", action="store_true",
                   help="skip the joint refinement stage")
    p.add_argument("--select-at-init", action="store_true",
                   help="pick the best cell by initialized validation RMSE")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel workers for grid cells")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("compare-init",
                       help="compare initialization schemes under one budget")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int,
                   help="rebase restart seeds at this value")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_compare_init)

    p = sub.add_parser("eval", help="evaluate a model file on a record")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--data", required=True, help="record CSV")
    p.add_argument("--out", help="output directory for eval.json")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except IdentificationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
