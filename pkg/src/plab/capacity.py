"""Capacity measures: target-fitting capacity and feature-rank estimators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import nn

DEFAULT_EPSILON = 0.01
DEFAULT_DELTA = 0.01

RANK_CSV_HEADER = ["n", "d", "epsilon", "effective_dim", "srank"] + [
    f"sv{i}" for i in range(16)
]


class UndefinedRankError(ValueError):
    """Raised when a rank statistic is requested for an all-zero matrix."""


@dataclass(frozen=True)
class FeatureMatrix:
    """An n-by-d matrix whose rows are feature embeddings of sampled inputs."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"feature matrix must be 2-D and non-empty, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature matrix has non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def _as_matrix(fm) -> np.ndarray:
    if isinstance(fm, FeatureMatrix):
        return fm.data
    return FeatureMatrix(np.asarray(fm)).data


def build_feature_matrix(params: nn.Params, spec: nn.MlpSpec, inputs: np.ndarray) -> FeatureMatrix:
    """Stack penultimate-layer activations for every input row."""
    _, features = nn.forward(params, spec, inputs)
    return FeatureMatrix(features)


def _scaled_singular_values(matrix: np.ndarray) -> np.ndarray:
    n = matrix.shape[0]
    s = np.linalg.svd(matrix / np.sqrt(n), compute_uv=False)
    # Values below the decomposition's noise floor are exact zeros in spirit;
    # snapping them keeps epsilon=0 equal to the exact matrix rank.
    if s.size and s[0] > 0.0:
        s[s <= s[0] * max(matrix.shape) * np.finfo(np.float64).eps] = 0.0
    return s


def effective_dim(fm, epsilon: float = DEFAULT_EPSILON) -> int:
    """Count singular values of the row-normalized matrix strictly above epsilon.

    The matrix is scaled by 1/sqrt(n) before the decomposition, so the count
    stabilizes as the number of sampled rows grows.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    s = _scaled_singular_values(_as_matrix(fm))
    return int(np.sum(s > epsilon))


def srank(fm, delta: float = DEFAULT_DELTA) -> int:
    """Smallest k whose top-k singular values hold a 1-delta fraction of the mass."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    s = np.linalg.svd(_as_matrix(fm), compute_uv=False)
    total = float(s.sum())
    if total <= 0.0:
        raise UndefinedRankError("srank is undefined for an all-zero matrix")
    ratios = np.cumsum(s) / total
    return int(np.searchsorted(ratios, 1.0 - delta) + 1)


@dataclass
class RankReport:
    """Spectrum summary of a feature matrix at fixed thresholds."""

    n: int
    d: int
    epsilon: float
    delta: float
    effective_dim: int
    srank: int
    singular_values: list[float]  # of the 1/sqrt(n)-scaled matrix, descending

    def csv_row(self) -> list[str]:
        top = list(self.singular_values[:16])
        top += [0.0] * (16 - len(top))
        return [
            str(self.n),
            str(self.d),
            format(self.epsilon, ".17g"),
            str(self.effective_dim),
            str(self.srank),
            *[format(v, ".17g") for v in top],
        ]


def rank_report(fm, epsilon: float = DEFAULT_EPSILON, delta: float = DEFAULT_DELTA) -> RankReport:
    matrix = _as_matrix(fm)
    s = _scaled_singular_values(matrix)
    eff = int(np.sum(s > epsilon))
    try:
        sr = srank(matrix, delta)
    except UndefinedRankError:
        sr = 0
    return RankReport(
        n=matrix.shape[0],
        d=matrix.shape[1],
        epsilon=float(epsilon),
        delta=float(delta),
        effective_dim=eff,
        srank=sr,
        singular_values=[float(v) for v in s],
    )


TargetFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class TargetFittingSpec:
    """Everything needed to measure how well a network fits fresh targets.

    ``inputs`` is the finite sample standing in for the input distribution:
    mini-batches are drawn from its rows and the final error is measured over
    all of them.  ``target_sampler`` maps a seed to a target function on those
    inputs.
    """

    spec: nn.MlpSpec
    init_params: nn.Params
    optimizer: nn.OptimizerState
    inputs: np.ndarray
    target_sampler: Callable[[int], TargetFn]
    budget_steps: int
    batch_size: int = 32
    num_target_seeds: int = 10
    batch_seed: int = 0

    def __post_init__(self):
        if self.budget_steps < 0:
            raise ValueError("budget_steps must be >= 0")
        if self.num_target_seeds < 1:
            raise ValueError("num_target_seeds must be >= 1")
        self.inputs = np.asarray(self.inputs, dtype=np.float64)


def _fit_one_target(tf: TargetFittingSpec, target_seed: int) -> float:
    target = tf.target_sampler(target_seed)
    targets = np.asarray(target(tf.inputs), dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]

    params = nn.snapshot_params(tf.init_params)
    state = nn.fresh_optimizer(tf.optimizer)
    rng = np.random.default_rng(np.random.SeedSequence((tf.batch_seed, target_seed)))
    n = tf.inputs.shape[0]
    for _ in range(tf.budget_steps):
        idx = rng.integers(0, n, size=min(tf.batch_size, n))
        _, grads = nn.loss_and_grad(params, tf.spec, tf.inputs[idx], targets[idx])
        nn.optimizer_step(state, params, grads)

    outputs, _ = nn.forward(params, tf.spec, tf.inputs)
    return float(np.mean((outputs - targets) ** 2))


def target_fitting_capacity(tf: TargetFittingSpec) -> tuple[float, list[float]]:
    """Mean post-training MSE over freshly sampled targets.

    For each target seed the network restarts from its initial parameters
    with a fresh optimizer, trains for the fixed budget, and reports the
    final MSE over the full input sample.
    """
    per_seed = [_fit_one_target(tf, s) for s in range(tf.num_target_seeds)]
    return float(np.mean(per_seed)), per_seed
