"""Gridworld environments, replay memory, and value-based agents."""

from .gridworld import (
    ACTIONS,
    NUM_ACTIONS,
    GridWorld,
    encode_cell,
    encode_cells,
    env_reset,
    env_step,
    make_four_rooms,
    make_open_grid,
)
from .replay import ReplayBuffer, Transition
from .agent import (
    AgentConfig,
    RandomCumulantConfig,
    TrainingLog,
    epsilon_greedy,
    probe_checkpoint_capacity,
    rc_aux_loss,
    td_loss_and_grad,
    train_agent,
)

__all__ = [
    "ACTIONS",
    "NUM_ACTIONS",
    "GridWorld",
    "encode_cell",
    "encode_cells",
    "env_reset",
    "env_step",
    "make_four_rooms",
    "make_open_grid",
    "ReplayBuffer",
    "Transition",
    "AgentConfig",
    "RandomCumulantConfig",
    "TrainingLog",
    "epsilon_greedy",
    "probe_checkpoint_capacity",
    "rc_aux_loss",
    "td_loss_and_grad",
    "train_agent",
]
