"""plab: a laboratory for measuring capacity loss in networks trained on
non-stationary targets, and for the interventions that mitigate it.

Modules:
    nn        float64 MLP engine: init, forward, exact gradients, SGD/Adam.
    capacity  target-fitting capacity and spectral rank estimators.
    tasks     datasets and sequential target-fitting task suites.
    infer     initial-feature-regularization auxiliary heads and losses.
    rl        gridworlds, replay, DQN variants, checkpoint capacity probes.
    dynamics  continuous-time linear TD feature flow and closed forms.
    runner    config-driven sweep execution with CSV/SVG artifacts.
"""

from . import capacity, dynamics, infer, nn, rl, runner, tasks
from .capacity import (
    FeatureMatrix,
    RankReport,
    TargetFittingSpec,
    build_feature_matrix,
    effective_dim,
    rank_report,
    srank,
    target_fitting_capacity,
)
from .infer import InferConfig, attach_aux_heads, infer_loss
from .nn import MlpSpec, Params, forward, init_params, load_params, save_params
from .runner import ExperimentConfig, parse_config, run_experiment, write_outputs
from .tasks import Dataset, load_idx, make_target, run_sequence, synth_inputs

__version__ = "0.1.0"

__all__ = [
    "capacity", "dynamics", "infer", "nn", "rl", "runner", "tasks",
    "FeatureMatrix", "RankReport", "TargetFittingSpec", "build_feature_matrix",
    "effective_dim", "rank_report", "srank", "target_fitting_capacity",
    "InferConfig", "attach_aux_heads", "infer_loss",
    "MlpSpec", "Params", "forward", "init_params", "load_params", "save_params",
    "ExperimentConfig", "parse_config", "run_experiment", "write_outputs",
    "Dataset", "load_idx", "make_target", "run_sequence", "synth_inputs",
    "__version__",
]
