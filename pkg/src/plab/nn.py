"""Minimal deterministic feedforward-network engine: ReLU MLPs on numpy.

Everything is double precision and a pure function of its explicit arguments
(including seeds), so repeated runs are bit-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

CHECKPOINT_MAGIC = b"PLAB1"

# Weights are sampled from a normal truncated to |z| <= 2 standard deviations.
TRUNC_BOUND = 2.0


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a fully connected ReLU network.

    ``layer_widths`` lists the input width first and the output width last;
    hidden layers use ReLU, the output layer is linear.  The penultimate
    layer defines the feature width; for a depth-1 (purely linear) network
    the features are the raw inputs.
    """

    layer_widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("layer_widths needs at least input and output width")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def feature_width(self) -> int:
        if self.num_layers == 1:
            return self.layer_widths[0]
        return self.layer_widths[-2]


@dataclass
class Params:
    """Per-layer weight matrices and bias vectors, float64.

    Canonical flat order is layer-major, weights before biases, matrices
    row-major; ``rng_seed`` records the seed used at initialization.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    rng_seed: int = 0

    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    # Inverse-CDF sampling: exact truncation, no rejection loop.
    lo, hi = ndtr(-TRUNC_BOUND), ndtr(TRUNC_BOUND)
    u = rng.uniform(lo, hi, size=shape)
    return ndtri(u) * std


def init_params(spec: MlpSpec, seed: int) -> Params:
    """Truncated-normal weights with std 1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        weights.append(_truncated_normal(rng, (fan_in, fan_out), 1.0 / np.sqrt(fan_in)))
        biases.append(np.zeros(fan_out))
    return Params(weights=weights, biases=biases, rng_seed=int(seed))


def _check_batch(spec: MlpSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != spec.input_width:
        raise ValueError(
            f"batch shape {batch.shape} does not match input width {spec.input_width}"
        )
    return batch


def forward(params: Params, spec: MlpSpec, batch: np.ndarray):
    """Run the network; returns (outputs, features).

    Features are the post-activation values of the penultimate layer (the
    inputs themselves for a depth-1 network).
    """
    outputs, features, _ = _forward_cached(params, spec, batch)
    return outputs, features


def _forward_cached(params: Params, spec: MlpSpec, batch: np.ndarray):
    h = _check_batch(spec, batch)
    acts = [h]  # inputs to each layer, post-activation
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    outputs = acts[-1] @ params.weights[-1] + params.biases[-1]
    return outputs, acts[-1], acts


def forward_with_pullback(params: Params, spec: MlpSpec, batch: np.ndarray):
    """Forward pass exposing a reverse-mode pullback.

    Returns (outputs, features, pullback) where pullback maps an
    n-by-output_width cotangent to Params-shaped gradients.  The ReLU
    subgradient at exactly 0 is taken to be 0.
    """
    outputs, features, acts = _forward_cached(params, spec, batch)

    def pullback(d_outputs: np.ndarray) -> Params:
        g = np.asarray(d_outputs, dtype=np.float64)
        if g.shape != outputs.shape:
            raise ValueError(f"cotangent shape {g.shape} != outputs {outputs.shape}")
        n_layers = len(params.weights)
        gw = [None] * n_layers
        gb = [None] * n_layers
        for layer in range(n_layers - 1, -1, -1):
            gw[layer] = acts[layer].T @ g
            gb[layer] = g.sum(axis=0)
            if layer > 0:
                g = g @ params.weights[layer].T
                g = np.where(acts[layer] > 0.0, g, 0.0)
        return Params(weights=gw, biases=gb, rng_seed=params.rng_seed)

    return outputs, features, pullback


def loss_and_grad(params: Params, spec: MlpSpec, batch: np.ndarray, targets: np.ndarray):
    """Mean squared error over batch and output components, with exact grads."""
    targets = np.asarray(targets, dtype=np.float64)
    outputs, _, pullback = forward_with_pullback(params, spec, batch)
    if targets.shape != outputs.shape:
        raise ValueError(f"targets shape {targets.shape} != outputs {outputs.shape}")
    diff = outputs - targets
    loss = float(np.mean(diff * diff))
    grads = pullback(diff * (2.0 / diff.size))
    return loss, grads


@dataclass
class OptimizerState:
    """State for SGD or Adam; moment accumulators are allocated lazily."""

    kind: str  # "sgd" | "adam"
    learning_rate: float = 1e-3
    step_count: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def make_optimizer(kind: str = "adam", learning_rate: float = 1e-3, **kw) -> OptimizerState:
    return OptimizerState(kind=kind, learning_rate=learning_rate, **kw)


def fresh_optimizer(template: OptimizerState) -> OptimizerState:
    """A zero-step copy of a template: same hyperparameters, no accumulators."""
    return replace(template, step_count=0, m=None, v=None)


def _all_arrays(params: Params) -> list[np.ndarray]:
    return list(params.weights) + list(params.biases)


def optimizer_step(state: OptimizerState, params: Params, grads: Params):
    """One update; mutates ``state`` and ``params`` in place and returns them."""
    p_arrs, g_arrs = _all_arrays(params), _all_arrays(grads)
    if len(p_arrs) != len(g_arrs) or any(p.shape != g.shape for p, g in zip(p_arrs, g_arrs)):
        raise ValueError("gradient shapes do not match parameter shapes")

    lr = state.learning_rate
    if state.kind == "sgd":
        for p, g in zip(p_arrs, g_arrs):
            p -= lr * g
        state.step_count += 1
        return state, params

    if state.m is None:
        state.m = [np.zeros_like(a) for a in p_arrs]
        state.v = [np.zeros_like(a) for a in p_arrs]
    if any(m.shape != p.shape for m, p in zip(state.m, p_arrs)):
        raise ValueError("optimizer accumulators do not match parameter shapes")

    t = state.step_count + 1
    b1, b2, eps = state.adam_beta1, state.adam_beta2, state.adam_eps
    c1 = 1.0 / (1.0 - b1**t)
    c2 = 1.0 / (1.0 - b2**t)
    for p, g, m, v in zip(p_arrs, g_arrs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m * c1) / (np.sqrt(v * c2) + eps)
    state.step_count = t
    return state, params


def snapshot_params(params: Params) -> Params:
    """Deep, independent copy; later mutation of the source leaves it unchanged."""
    return Params(
        weights=[w.copy() for w in params.weights],
        biases=[b.copy() for b in params.biases],
        rng_seed=params.rng_seed,
    )


def params_to_flat(params: Params) -> np.ndarray:
    """Canonical flat layout: layer-major, weights before biases, row-major."""
    chunks = []
    for w, b in zip(params.weights, params.biases):
        chunks.append(np.ascontiguousarray(w).ravel())
        chunks.append(np.ascontiguousarray(b).ravel())
    return np.concatenate(chunks)


def flat_to_params(spec: MlpSpec, flat: np.ndarray, rng_seed: int = 0) -> Params:
    flat = np.asarray(flat, dtype=np.float64)
    weights, biases, pos = [], [], 0
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        pos += fan_in * fan_out
        biases.append(flat[pos : pos + fan_out].copy())
        pos += fan_out
    if pos != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, spec needs {pos}")
    return Params(weights=weights, biases=biases, rng_seed=rng_seed)


def save_params(path, spec: MlpSpec, params: Params) -> None:
    """Binary checkpoint: magic, widths, then float64 LE in canonical order."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(spec.layer_widths)))
        fh.write(struct.pack(f"<{len(spec.layer_widths)}I", *spec.layer_widths))
        fh.write(params_to_flat(params).astype("<f8").tobytes())


def load_params(path) -> tuple[MlpSpec, Params]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic at offset 0 in {path}")
    pos = len(CHECKPOINT_MAGIC)
    (n_widths,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    widths = struct.unpack_from(f"<{n_widths}I", blob, pos)
    pos += 4 * n_widths
    spec = MlpSpec(widths)
    flat = np.frombuffer(blob, dtype="<f8", offset=pos)
    expected = sum(
        i * o + o for i, o in zip(spec.layer_widths[:-1], spec.layer_widths[1:])
    )
    if flat.size != expected:
        raise ValueError(
            f"checkpoint holds {flat.size} parameters, spec {widths} needs {expected}"
        )
    return spec, flat_to_params(spec, flat.astype(np.float64))
