"""Nonlinear state-space system identification.

Identify discrete-time models consisting of a linear state-space core
with additive static tanh-network nonlinearities in both the state
update and the output map.  The package provides the full workflow:

- a linear (best linear approximation) fit of the dynamics,
- a state-trajectory estimate that trades output fit against
  state-equation consistency,
- static network fits that turn the trajectory into a full nonlinear
  model without ever simulating it,
- joint Levenberg-Marquardt refinement on the simulation error,
- a synthetic Wiener-Hammerstein benchmark generator, grid/comparison
  experiment drivers, and a command-line interface.
"""

from .bench import WhConfig, generate_wh, load_benchmark, static_curve
from .errors import (ConfigError, DataError, DataFormatError,
                     DegenerateDataError, DimensionError, DivergenceError,
                     IdentificationError, IllConditionedError, NonFiniteError,
                     SingularSystemError, UnstableModelError)
from .estimator import NlssIdentifier
from .lm import LmResult, LmSettings, TraceEntry, levenberg_marquardt
from .lti import (LtiModel, estimate_bla, markov_parameters, rmse,
                  simulate_lti)
from .nlss import (NlssModel, OptimizeResult, assemble_initialized,
                   optimize_nlss, pack_theta, save_trace_csv,
                   simulate_nlss, simulation_jacobian, static_datasets,
                   theta_length, theta_slices, unpack_theta)
from .nonlin import (StaticDataset, TanhNet, eval_net, fit_static,
                     init_positions, zero_net)
from .pipeline import (ComparisonReport, PipelineConfig, RunReport,
                       emit_comparison, emit_report, run_init_comparison,
                       run_pipeline, zero_amplitudes)
from .records import IoRecord, load_record_csv, save_record_csv
from .state_estimator import (LambdaCost, StateTrajectory, estimate_state,
                              lambda_grid_costs)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DataFormatError", "DegenerateDataError",
    "DimensionError", "DivergenceError", "IdentificationError",
    "IllConditionedError", "NonFiniteError", "SingularSystemError",
    "UnstableModelError",
    "IoRecord", "load_record_csv", "save_record_csv",
    "LtiModel", "estimate_bla", "markov_parameters", "rmse", "simulate_lti",
    "LmResult", "LmSettings", "TraceEntry", "levenberg_marquardt",
    "StateTrajectory", "LambdaCost", "estimate_state", "lambda_grid_costs",
    "TanhNet", "StaticDataset", "eval_net", "fit_static", "init_positions",
    "zero_net",
    "NlssModel", "OptimizeResult", "assemble_initialized", "optimize_nlss",
    "pack_theta", "save_trace_csv", "simulate_nlss", "simulation_jacobian",
    "static_datasets", "theta_length", "theta_slices", "unpack_theta",
    "WhConfig", "generate_wh", "load_benchmark", "static_curve",
    "PipelineConfig", "RunReport", "ComparisonReport", "emit_comparison",
    "emit_report", "run_init_comparison", "run_pipeline", "zero_amplitudes",
    "NlssIdentifier",
    "__version__",
]
