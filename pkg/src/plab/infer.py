"""Initial-feature regularization: auxiliary heads anchored to their outputs
under the network's initial parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import nn

# Salt separating the aux-head RNG stream from every other seed in the library.
_HEAD_STREAM = 0x1A5F


@dataclass(frozen=True)
class InferConfig:
    """Auxiliary-head setup: k heads, target scale beta, loss weight alpha."""

    k: int = 10
    beta: float = 100.0
    alpha: float = 0.1
    head_seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.beta <= 0 or self.alpha < 0:
            raise ValueError("beta must be positive and alpha non-negative")


def attach_aux_heads(spec: nn.MlpSpec, params: nn.Params, cfg: InferConfig):
    """Widen the output layer with k linear heads reading the same features.

    Head weights come from a dedicated RNG stream, so the base parameters are
    bit-identical with and without heads.  Returns the augmented spec and
    params plus a frozen snapshot of the augmented parameters taken now.
    """
    if spec.num_layers < 2:
        raise ValueError("aux heads need depth >= 2; features would be raw inputs")
    d = spec.feature_width
    out = spec.output_width
    aug_spec = nn.MlpSpec(spec.layer_widths[:-1] + (out + cfg.k,))

    head_rng = np.random.default_rng(np.random.SeedSequence((_HEAD_STREAM, cfg.head_seed)))
    head_w = nn._truncated_normal(head_rng, (d, cfg.k), 1.0 / np.sqrt(d))

    aug = nn.snapshot_params(params)
    aug.weights[-1] = np.concatenate([aug.weights[-1], head_w], axis=1)
    aug.biases[-1] = np.concatenate([aug.biases[-1], np.zeros(cfg.k)])
    theta0 = nn.snapshot_params(aug)
    return aug_spec, aug, theta0


def aux_outputs(params: nn.Params, spec: nn.MlpSpec, batch: np.ndarray, k: int) -> np.ndarray:
    """The k auxiliary head outputs (the trailing output columns)."""
    outputs, _ = nn.forward(params, spec, batch)
    return outputs[:, outputs.shape[1] - k :]


def infer_loss(params: nn.Params, theta0: nn.Params, spec: nn.MlpSpec,
               batch: np.ndarray, beta: float, k: int) -> float:
    """Mean over the batch of the summed squared head drift from beta-scaled
    initial outputs; no gradient ever flows into theta0."""
    loss, _ = infer_loss_and_grad(params, theta0, spec, batch, beta, k)
    return loss


def infer_loss_and_grad(params: nn.Params, theta0: nn.Params, spec: nn.MlpSpec,
                        batch: np.ndarray, beta: float, k: int):
    outputs, _, pullback = nn.forward_with_pullback(params, spec, batch)
    anchor, _ = nn.forward(theta0, spec, batch)
    width = outputs.shape[1]
    drift = outputs[:, width - k :] - beta * anchor[:, width - k :]
    loss = float(np.mean(np.sum(drift * drift, axis=1)))
    d_out = np.zeros_like(outputs)
    d_out[:, width - k :] = drift * (2.0 / batch.shape[0])
    return loss, pullback(d_out)


MainLossFn = Callable[[nn.Params], tuple[float, nn.Params]]


def combined_loss_grad(main_loss_fn: MainLossFn, params: nn.Params, theta0: nn.Params,
                       spec: nn.MlpSpec, batch: np.ndarray, cfg: InferConfig):
    """Main objective plus alpha times the regularizer, with summed gradients.

    With alpha = 0 the returned gradients are bit-equal to the main loss's.
    """
    main_loss, main_grads = main_loss_fn(params)
    reg_loss, reg_grads = infer_loss_and_grad(params, theta0, spec, batch, cfg.beta, cfg.k)
    if cfg.alpha == 0.0:
        return main_loss, main_grads
    total = main_loss + cfg.alpha * reg_loss
    grads = nn.Params(
        weights=[mg + cfg.alpha * rg for mg, rg in zip(main_grads.weights, reg_grads.weights)],
        biases=[mg + cfg.alpha * rg for mg, rg in zip(main_grads.biases, reg_grads.biases)],
        rng_seed=main_grads.rng_seed,
    )
    return total, grads
