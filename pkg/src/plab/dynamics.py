"""Continuous-time linear TD feature dynamics: ensemble flow simulator and
its closed-form infinite-ensemble limits."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from . import capacity

DIVERGENCE_LIMIT = 1e12
DEFAULT_DT = 1e-3


class FlowDivergenceError(RuntimeError):
    """The integrated flow blew up; message names the time of detection."""


@dataclass(frozen=True)
class Mrp:
    """Markov reward process: row-stochastic P, reward vector R, discount."""

    P: np.ndarray
    R: np.ndarray
    gamma: float

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError(f"P must be square, got {P.shape}")
        if R.shape != (P.shape[0],):
            raise ValueError("R must be one reward per state")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("P rows must be non-negative and sum to 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)

    @property
    def num_states(self) -> int:
        return self.P.shape[0]


def random_mrp(seed: int, num_states: int, gamma: float = 0.9,
               reward_scale: float = 0.0) -> Mrp:
    """Generic ergodic chain: Dirichlet(1,...,1) rows, optional normal rewards."""
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(num_states), size=num_states)
    R = reward_scale * rng.standard_normal(num_states) if reward_scale else np.zeros(num_states)
    return Mrp(P=P, R=R, gamma=gamma)


@dataclass
class FlowState:
    """Feature matrix, ensemble weights, and flow hyperparameters at time t."""

    phi: np.ndarray          # |X| x d
    w: np.ndarray            # M x d, one row per head
    t: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    sigma_m_sq: float = 1.0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.phi.ndim != 2 or self.w.ndim != 2 or self.w.shape[1] != self.phi.shape[1]:
            raise ValueError("phi must be |X| x d and w must be M x d")
        if self.w.shape[0] < 1:
            raise ValueError("need at least one head")

    @property
    def num_heads(self) -> int:
        return self.w.shape[0]


def init_flow_state(seed: int, phi0: np.ndarray, num_heads: int,
                    alpha: float, beta: float, sigma_m_sq: float = 1.0) -> FlowState:
    """Heads drawn i.i.d. N(0, sigma_m_sq) for a given initial feature matrix."""
    rng = np.random.default_rng(seed)
    phi0 = np.asarray(phi0, dtype=np.float64)
    w = rng.normal(0.0, np.sqrt(sigma_m_sq), size=(num_heads, phi0.shape[1]))
    return FlowState(phi=phi0.copy(), w=w, t=0.0, alpha=alpha, beta=beta,
                     sigma_m_sq=sigma_m_sq)


@dataclass(frozen=True)
class NoiseVector:
    """The length-d standard-normal direction entering the reward-case limit."""

    eps: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "eps", np.asarray(self.eps, dtype=np.float64))


def draw_noise(seed: int, d: int) -> NoiseVector:
    rng = np.random.default_rng(seed)
    return NoiseVector(eps=rng.standard_normal(d), seed=int(seed))


def matrix_exponential(A: np.ndarray) -> np.ndarray:
    """exp(A) by scaling-and-squaring with a Pade approximant."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix exponential needs a square matrix, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix exponential needs finite entries")
    return scipy.linalg.expm(A)


def _flow_derivatives(mrp: Mrp, phi: np.ndarray, w: np.ndarray,
                      alpha: float, beta: float):
    # TD errors for all heads at once: column m is R + (gamma P - I) Phi w_m.
    drift = mrp.gamma * (mrp.P @ phi) - phi
    errors = mrp.R[:, None] + drift @ w.T
    d_phi = alpha * (errors @ w)
    d_w = beta * (errors.T @ phi)
    return d_phi, d_w


def simulate_ensemble_flow(mrp: Mrp, state: FlowState, dt: float, T: float,
                           fixed_weights: bool = False,
                           snapshot_stride: int = 1000) -> list[FlowState]:
    """Integrate the ensemble TD flow with RK4.

    ``fixed_weights`` freezes the heads (weight learning rate 0).  Snapshots
    are recorded every ``snapshot_stride`` steps plus the initial and final
    states.  Any entry exceeding 1e12 in magnitude aborts with the time of
    the blow-up.
    """
    if dt <= 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    alpha = state.alpha
    beta = 0.0 if fixed_weights else state.beta

    phi, w = state.phi.copy(), state.w.copy()
    num_steps = int(round(T / dt))
    snapshots = [replace(state, phi=phi.copy(), w=w.copy(), t=0.0, beta=beta)]
    for step in range(1, num_steps + 1):
        k1p, k1w = _flow_derivatives(mrp, phi, w, alpha, beta)
        k2p, k2w = _flow_derivatives(mrp, phi + 0.5 * dt * k1p, w + 0.5 * dt * k1w, alpha, beta)
        k3p, k3w = _flow_derivatives(mrp, phi + 0.5 * dt * k2p, w + 0.5 * dt * k2w, alpha, beta)
        k4p, k4w = _flow_derivatives(mrp, phi + dt * k3p, w + dt * k3w, alpha, beta)
        phi += (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        w += (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        t = step * dt
        if max(np.max(np.abs(phi)), np.max(np.abs(w))) > DIVERGENCE_LIMIT:
            raise FlowDivergenceError(f"flow diverged at t={t:.6g}")
        if step % snapshot_stride == 0 or step == num_steps:
            snapshots.append(replace(state, phi=phi.copy(), w=w.copy(), t=t, beta=beta))
    return snapshots


def closed_form_phi(mrp: Mrp, phi0: np.ndarray, t: float,
                    reward_case: bool = False,
                    noise: Optional[NoiseVector] = None) -> np.ndarray:
    """Infinite-ensemble limit of the feature trajectory at time t.

    Without the reward case this is exp(-t(I - gamma P)) Phi0; with it, the
    fixed point (I - gamma P)^{-1} R eps^T is approached along the same
    exponential.
    """
    phi0 = np.asarray(phi0, dtype=np.float64)
    A = np.eye(mrp.num_states) - mrp.gamma * mrp.P
    decay = matrix_exponential(-t * A)
    if not reward_case:
        return decay @ phi0
    if noise is None:
        raise ValueError("the reward case needs a NoiseVector")
    anchor = np.outer(np.linalg.solve(A, mrp.R), noise.eps)
    return decay @ (phi0 - anchor) + anchor


def rank_over_time(trajectory: list[FlowState],
                   epsilon: float = capacity.DEFAULT_EPSILON):
    """Per-snapshot (t, effective_dim, frobenius_norm) series."""
    if not trajectory:
        raise ValueError("trajectory is empty")
    series = []
    for snap in trajectory:
        eff = capacity.effective_dim(capacity.FeatureMatrix(snap.phi), epsilon)
        series.append((snap.t, eff, float(np.linalg.norm(snap.phi))))
    return series


def trajectory_csv_rows(trajectory: list[FlowState],
                        epsilon: float = capacity.DEFAULT_EPSILON):
    """Rows for the trajectory interface: t, norm, effective_dim, top-4 svals."""
    rows = []
    for snap in trajectory:
        s = np.linalg.svd(snap.phi, compute_uv=False)
        top4 = list(s[:4]) + [0.0] * max(0, 4 - s.size)
        eff = capacity.effective_dim(capacity.FeatureMatrix(snap.phi), epsilon)
        rows.append([
            format(snap.t, ".17g"),
            format(float(np.linalg.norm(snap.phi)), ".17g"),
            str(eff),
            *[format(float(v), ".17g") for v in top4],
        ])
    return rows


TRAJECTORY_CSV_HEADER = ["t", "frobenius_norm", "effective_dim",
                         "sv0", "sv1", "sv2", "sv3"]
