"""Value-based agents: DQN and Double-DQN with replay, a target network,
and optional feature-preserving auxiliary losses.

Output head layout on the shared trunk: the first ``num_actions`` columns
are Q-values, then the random-cumulant heads if configured, and the
feature-drift auxiliary heads always occupy the trailing columns.
"""

from __future__ import annotations

import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar, Optional

import numpy as np

from .. import capacity, infer, nn, tasks
from . import gridworld as gw
from .replay import ReplayBuffer

ALGORITHMS = ("dqn", "double_dqn")
CUMULANT_HIDDEN = (30, 30)
CUMULANT_SCALES = (10.0, 100.0, 200.0)

# Child-stream tags of the run seed; one independent stream per consumer.
_STREAM_EXPLORE = 0
_STREAM_INIT = 1
_STREAM_BUFFER = 2
_STREAM_RC = 3
_STREAM_CONCAT = 4


@dataclass(frozen=True)
class RandomCumulantConfig:
    """Auxiliary heads that TD-learn values of frozen random cumulants."""

    num_heads: int = 5
    cumulant_scale: float = 10.0
    loss_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_heads < 1:
            raise ValueError("num_heads must be >= 1")
        if self.cumulant_scale <= 0:
            raise ValueError("cumulant_scale must be positive")
        if self.loss_weight < 0:
            raise ValueError("loss_weight must be >= 0")


@dataclass(frozen=True)
class AgentConfig:
    """Training hyperparameters; defaults are the desk-scale settings."""

    algorithm: str = "dqn"
    hidden: tuple = (64, 64)
    width_multiplier: int = 1
    learning_rate: float = 1e-3
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 10_000
    target_update_period: int = 1000
    learn_start: int = 1000
    buffer_capacity: int = 50_000
    batch_size: int = 32
    num_steps: int = 50_000
    checkpoint_period: int = 5000
    rank_probe_samples: int = 5000
    rank_epsilon: float = capacity.DEFAULT_EPSILON
    infer_cfg: Optional[infer.InferConfig] = None
    rc_aux: Optional[RandomCumulantConfig] = None
    concat_random_features: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if len(self.hidden) < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("hidden must be a non-empty tuple of positive widths")
        if self.width_multiplier not in (1, 2):
            raise ValueError("width_multiplier must be 1 or 2")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        for name in ("epsilon_decay_steps", "target_update_period", "learn_start",
                     "buffer_capacity", "batch_size", "num_steps",
                     "checkpoint_period", "rank_probe_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def trunk_widths(self, input_dim: int) -> tuple:
        hidden = list(self.hidden)
        hidden[-1] *= self.width_multiplier
        return (input_dim, *hidden)

    def head_width(self, num_actions: int) -> int:
        extra = self.rc_aux.num_heads if self.rc_aux is not None else 0
        return num_actions + extra


def epsilon_by_step(cfg: AgentConfig, step: int) -> float:
    """Linear anneal from epsilon_start to epsilon_end over the decay window."""
    frac = min(1.0, max(0.0, step / cfg.epsilon_decay_steps))
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


def epsilon_greedy(q_values: np.ndarray, epsilon: float,
                   rng: np.random.Generator) -> int:
    """With probability epsilon a uniform action, else lowest-index argmax."""
    q_values = np.asarray(q_values, dtype=np.float64).ravel()
    if q_values.size == 0:
        raise ValueError("q_values is empty")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.uniform() < epsilon:
        return int(rng.integers(0, q_values.size))
    return int(np.argmax(q_values))


def make_cumulant_nets(cfg: RandomCumulantConfig, input_dim: int):
    """One frozen random network per head; outputs are scaled on evaluation."""
    nets = []
    for j in range(cfg.num_heads):
        spec = nn.MlpSpec((input_dim, *CUMULANT_HIDDEN, 1))
        seed = np.random.SeedSequence((_STREAM_RC, cfg.seed, j)).generate_state(1)[0]
        nets.append((spec, nn.init_params(spec, int(seed))))
    return nets


def eval_cumulants(nets, cfg: RandomCumulantConfig, x: np.ndarray) -> np.ndarray:
    cols = [nn.forward(p, s, x)[0] for s, p in nets]
    return cfg.cumulant_scale * np.concatenate(cols, axis=1)


def td_loss_and_grad(params: nn.Params, spec: nn.MlpSpec,
                     target_params: nn.Params, batch, gamma: float,
                     num_actions: int, algorithm: str = "dqn"):
    """Squared TD error, averaged over the batch, with exact gradients.

    ``batch`` is (states, actions, rewards, next_states, dones).  Bootstrap
    targets are held constant: no gradient flows through the target network
    or the action selection.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    x, actions, rewards, x2, dones = batch
    actions = np.asarray(actions, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("batch is empty")

    outputs, _, pullback = nn.forward_with_pullback(params, spec, x)
    q_next_target = nn.forward(target_params, spec, x2)[0][:, :num_actions]
    if algorithm == "double_dqn":
        q_next_online = nn.forward(params, spec, x2)[0][:, :num_actions]
        best = np.argmax(q_next_online, axis=1)
        boot = q_next_target[np.arange(len(best)), best]
    else:
        boot = q_next_target.max(axis=1)
    targets = rewards + gamma * boot * (1.0 - dones)

    rows = np.arange(x.shape[0])
    diff = outputs[rows, actions] - targets
    loss = float(np.mean(diff * diff))
    d_out = np.zeros_like(outputs)
    d_out[rows, actions] = diff * (2.0 / diff.size)
    return loss, pullback(d_out)


def rc_aux_loss(params: nn.Params, spec: nn.MlpSpec, target_params: nn.Params,
                batch, gamma: float, num_actions: int,
                cfg: Optional[RandomCumulantConfig], cumulant_nets):
    """Bootstrapped squared error of the cumulant-value heads.

    Head j predicts the discounted value of its frozen cumulant; the target
    is c_j(x) + gamma * h_j(x') under the target network, zero bootstrap at
    terminal transitions.  Loss is summed over heads, averaged over batch.
    """
    if cfg is None:
        raise ValueError("random-cumulant config is absent")
    x, _, _, x2, dones = batch
    dones = np.asarray(dones, dtype=np.float64)
    m = cfg.num_heads
    lo, hi = num_actions, num_actions + m

    outputs, _, pullback = nn.forward_with_pullback(params, spec, x)
    h_next = nn.forward(target_params, spec, x2)[0][:, lo:hi]
    targets = eval_cumulants(cumulant_nets, cfg, x) + gamma * h_next * (1.0 - dones)[:, None]

    diff = outputs[:, lo:hi] - targets
    loss = float(np.sum(diff * diff) / x.shape[0])
    d_out = np.zeros_like(outputs)
    d_out[:, lo:hi] = diff * (2.0 / x.shape[0])
    return loss, pullback(d_out)


@dataclass
class TrainingLog:
    """Per-episode returns plus one summary row per checkpoint."""

    CSV_HEADER: ClassVar[list] = ["step", "episode_return", "epsilon", "td_loss",
                                  "infer_loss", "effective_dim", "srank"]

    episode_returns: list = field(default_factory=list)  # (env step, return)
    rows: list = field(default_factory=list)             # dicts keyed by CSV_HEADER
    checkpoint_dirs: list = field(default_factory=list)
    run_dir: Optional[str] = None

    def csv_rows(self) -> list:
        out = []
        for row in self.rows:
            out.append([
                str(row["step"]),
                format(row["episode_return"], ".17g"),
                format(row["epsilon"], ".17g"),
                format(row["td_loss"], ".17g"),
                format(row["infer_loss"], ".17g"),
                str(row["effective_dim"]),
                str(row["srank"]),
            ])
        return out

    def write_csv(self, path) -> None:
        lines = [",".join(self.CSV_HEADER)]
        lines += [",".join(r) for r in self.csv_rows()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


class _AgentNets:
    """Online/target parameter pairs plus the frozen auxiliary pieces."""

    def __init__(self, env: gw.GridWorld, cfg: AgentConfig, seed: int):
        obs = env.num_cells
        trunk = cfg.trunk_widths(obs)
        base_spec = nn.MlpSpec((*trunk, cfg.head_width(gw.NUM_ACTIONS)))
        init_seed = np.random.SeedSequence((seed, _STREAM_INIT)).generate_state(1)[0]
        params = nn.init_params(base_spec, int(init_seed))

        self.theta0 = None
        if cfg.infer_cfg is not None:
            self.spec, self.params, self.theta0 = infer.attach_aux_heads(
                base_spec, params, cfg.infer_cfg)
        else:
            self.spec, self.params = base_spec, params
        self.target = nn.snapshot_params(self.params)

        self.concat_trunk = None
        self.head_spec = None
        self.head_params = None
        self.head_target = None
        self.head_theta0 = None
        if cfg.concat_random_features:
            # Frozen random trunk; its features feed a learnable linear map
            # added onto every output column.
            trunk_spec = nn.MlpSpec(trunk)
            ss = np.random.SeedSequence((seed, _STREAM_CONCAT)).generate_state(2)
            self.concat_trunk = (trunk_spec, nn.init_params(trunk_spec, int(ss[0])))
            self.head_spec = nn.MlpSpec((trunk[-1], self.spec.output_width))
            self.head_params = nn.init_params(self.head_spec, int(ss[1]))
            self.head_target = nn.snapshot_params(self.head_params)
            self.head_theta0 = nn.snapshot_params(self.head_params)

        self.cumulant_nets = None
        if cfg.rc_aux is not None:
            self.cumulant_nets = make_cumulant_nets(cfg.rc_aux, obs)

    def random_features(self, x: np.ndarray) -> np.ndarray:
        spec, params = self.concat_trunk
        return np.maximum(nn.forward(params, spec, x)[0], 0.0)

    def outputs(self, params: nn.Params, head_params, x: np.ndarray) -> np.ndarray:
        out = nn.forward(params, self.spec, x)[0]
        if self.concat_trunk is not None:
            out = out + nn.forward(head_params, self.head_spec, self.random_features(x))[0]
        return out

    def sync_target(self) -> None:
        self.target = nn.snapshot_params(self.params)
        if self.head_params is not None:
            self.head_target = nn.snapshot_params(self.head_params)


def _training_step(nets: _AgentNets, cfg: AgentConfig, gamma: float, batch,
                   optimizer: nn.OptimizerState,
                   head_optimizer: Optional[nn.OptimizerState]):
    """One gradient update on the composed loss; returns (td, infer) losses."""
    x, actions, rewards, x2, dones = batch
    actions = np.asarray(actions, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = x.shape[0]
    A = gw.NUM_ACTIONS

    outputs, _, pullback = nn.forward_with_pullback(nets.params, nets.spec, x)
    head_pullback = None
    if nets.concat_trunk is not None:
        head_out, _, head_pullback = nn.forward_with_pullback(
            nets.head_params, nets.head_spec, nets.random_features(x))
        outputs = outputs + head_out

    next_target = nets.outputs(nets.target, nets.head_target, x2)
    q_next_target = next_target[:, :A]
    if cfg.algorithm == "double_dqn":
        q_next_online = nets.outputs(nets.params, nets.head_params, x2)[:, :A]
        best = np.argmax(q_next_online, axis=1)
        boot = q_next_target[np.arange(n), best]
    else:
        boot = q_next_target.max(axis=1)
    td_targets = rewards + gamma * boot * (1.0 - dones)

    rows = np.arange(n)
    diff = outputs[rows, actions] - td_targets
    td_loss = float(np.mean(diff * diff))
    d_out = np.zeros_like(outputs)
    d_out[rows, actions] = diff * (2.0 / n)

    infer_loss_value = float("nan")
    if cfg.infer_cfg is not None:
        icfg = cfg.infer_cfg
        anchor = nets.outputs(nets.theta0, nets.head_theta0, x)[:, -icfg.k:]
        drift = outputs[:, -icfg.k:] - icfg.beta * anchor
        infer_loss_value = float(np.sum(drift * drift) / n)
        if icfg.alpha != 0.0:
            d_out[:, -icfg.k:] += icfg.alpha * drift * (2.0 / n)

    if cfg.rc_aux is not None:
        rc = cfg.rc_aux
        lo, hi = A, A + rc.num_heads
        h_next = next_target[:, lo:hi]
        rc_targets = (eval_cumulants(nets.cumulant_nets, rc, x)
                      + gamma * h_next * (1.0 - dones)[:, None])
        rc_diff = outputs[:, lo:hi] - rc_targets
        if rc.loss_weight != 0.0:
            d_out[:, lo:hi] += rc.loss_weight * rc_diff * (2.0 / n)

    nn.optimizer_step(optimizer, nets.params, pullback(d_out))
    if head_pullback is not None:
        nn.optimizer_step(head_optimizer, nets.head_params, head_pullback(d_out))
    return td_loss, infer_loss_value


def _write_checkpoint(run_dir: Path, step: int, nets: _AgentNets,
                      buffer: ReplayBuffer, report: capacity.RankReport) -> Path:
    """Materialize step_<k>/{params.bin, buffer.bin, rank.csv} atomically."""
    final = run_dir / f"step_{step}"
    tmp = Path(tempfile.mkdtemp(dir=run_dir, prefix=".tmp_step_"))
    try:
        nn.save_params(tmp / "params.bin", nets.spec, nets.params)
        buffer.save(tmp / "buffer.bin")
        lines = [",".join(capacity.RANK_CSV_HEADER), ",".join(report.csv_row())]
        (tmp / "rank.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    except Exception:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def _float_mean(values: list) -> float:
    return float(np.mean(values)) if values else float("nan")


def train_agent(env: gw.GridWorld, cfg: AgentConfig, seed: int,
                out_dir=None) -> TrainingLog:
    """Train one agent; deterministic given (env, cfg, seed).

    When ``out_dir`` is given, every checkpoint period writes
    ``step_<k>/{params.bin, buffer.bin, rank.csv}`` under it and the full
    summary log lands in ``log.csv``.  Rank probes evaluate trunk features
    over the most recent ``rank_probe_samples`` buffer states.
    """
    obs_dim = env.num_cells
    nets = _AgentNets(env, cfg, seed)
    explore_rng = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_EXPLORE)))
    buffer_seed = np.random.SeedSequence((seed, _STREAM_BUFFER)).generate_state(1)[0]
    buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim, seed=int(buffer_seed))
    optimizer = nn.make_optimizer("adam", cfg.learning_rate)
    head_optimizer = (nn.make_optimizer("adam", cfg.learning_rate)
                      if cfg.concat_random_features else None)

    run_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir)
        run_dir.mkdir(parents=True, exist_ok=True)

    log = TrainingLog(run_dir=str(run_dir) if run_dir is not None else None)
    state = gw.env_reset(env)
    steps_in_episode = 0
    episode_return = 0.0
    window_returns: list = []
    window_td: list = []
    window_infer: list = []
    learner_steps = 0

    for step in range(1, cfg.num_steps + 1):
        eps = epsilon_by_step(cfg, step - 1)
        q_row = nets.outputs(nets.params, nets.head_params,
                             gw.encode_cell(env, state)[None, :])[0, :gw.NUM_ACTIONS]
        action = epsilon_greedy(q_row, eps, explore_rng)
        next_state, reward, done = gw.env_step(env, state, action, steps_in_episode)
        buffer.push(gw.encode_cell(env, state), action, reward,
                    gw.encode_cell(env, next_state), done)
        episode_return += reward
        steps_in_episode += 1
        if done:
            log.episode_returns.append((step, episode_return))
            window_returns.append(episode_return)
            state = gw.env_reset(env)
            steps_in_episode = 0
            episode_return = 0.0
        else:
            state = next_state

        if step >= cfg.learn_start and len(buffer) >= cfg.batch_size:
            batch = buffer.sample(cfg.batch_size)
            td_loss, infer_loss = _training_step(
                nets, cfg, env.gamma, batch, optimizer, head_optimizer)
            window_td.append(td_loss)
            if cfg.infer_cfg is not None:
                window_infer.append(infer_loss)
            learner_steps += 1
            if learner_steps % cfg.target_update_period == 0:
                nets.sync_target()

        if step % cfg.checkpoint_period == 0:
            probe_count = min(cfg.rank_probe_samples, len(buffer))
            probe_states = buffer.recent_states(probe_count)
            feats = nn.forward(nets.params, nets.spec, probe_states)[1]
            report = capacity.rank_report(capacity.FeatureMatrix(feats),
                                          epsilon=cfg.rank_epsilon)
            log.rows.append({
                "step": step,
                "episode_return": _float_mean(window_returns),
                "epsilon": eps,
                "td_loss": _float_mean(window_td),
                "infer_loss": _float_mean(window_infer) if cfg.infer_cfg is not None
                              else float("nan"),
                "effective_dim": report.effective_dim,
                "srank": report.srank,
            })
            window_returns, window_td, window_infer = [], [], []
            if run_dir is not None:
                ckpt = _write_checkpoint(run_dir, step, nets, buffer, report)
                log.checkpoint_dirs.append(str(ckpt))

    if run_dir is not None:
        log.write_csv(run_dir / "log.csv")
    return log


@dataclass(frozen=True)
class CapacityProbeResult:
    mean_mse: float
    per_seed: list
    num_inputs: int
    budget_steps: int
    batch_size: int


def probe_checkpoint_capacity(checkpoint_dir, num_target_seeds: int = 10,
                              budget_steps: int = 2000, batch_size: int = 32,
                              oldest_fraction: float = 0.1,
                              batch_seed: int = 0) -> CapacityProbeResult:
    """Target-fitting capacity of a saved checkpoint; files are only read.

    The probe network is the checkpoint's trunk with a scalar head taken
    from the first Q column; inputs are the oldest states in the saved
    buffer; targets are fresh random-network functions.
    """
    ckpt = Path(checkpoint_dir)
    spec, params = nn.load_params(ckpt / "params.bin")
    buffer = ReplayBuffer.load(ckpt / "buffer.bin")
    if len(buffer) == 0:
        raise ValueError("checkpoint buffer snapshot is empty")
    inputs = buffer.oldest_states(oldest_fraction)

    probe_spec = nn.MlpSpec((*spec.layer_widths[:-1], 1))
    probe_params = nn.Params(
        weights=[w.copy() for w in params.weights[:-1]] + [params.weights[-1][:, :1].copy()],
        biases=[b.copy() for b in params.biases[:-1]] + [params.biases[-1][:1].copy()],
        rng_seed=params.rng_seed,
    )
    tf = capacity.TargetFittingSpec(
        spec=probe_spec,
        init_params=probe_params,
        optimizer=nn.make_optimizer("adam", 1e-3),
        inputs=inputs,
        target_sampler=tasks.target_sampler("random_net", input_dim=inputs.shape[1]),
        budget_steps=budget_steps,
        batch_size=batch_size,
        num_target_seeds=num_target_seeds,
        batch_seed=batch_seed,
    )
    mean, per_seed = capacity.target_fitting_capacity(tf)
    return CapacityProbeResult(mean_mse=mean, per_seed=per_seed,
                               num_inputs=inputs.shape[0],
                               budget_steps=budget_steps, batch_size=batch_size)
