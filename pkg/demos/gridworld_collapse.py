"""Feature rank of a DQN agent under zeroed versus dense rewards.

Trains two small agents on the same 5x5 grid: one receives the usual
dense reward, the other a constant zero (every TD target is then a pure
bootstrap toward zero).  The zero-reward agent's feature rank collapses;
the rewarded agent keeps a usable representation.  Short runs, so the
numbers are noisier than a full experiment.
"""

from plab.rl import agent, gridworld

cfg = agent.AgentConfig(hidden=(32, 32), num_steps=20000, learn_start=500,
                        epsilon_decay_steps=2000, checkpoint_period=2500,
                        rank_probe_samples=1000, buffer_capacity=20000)

logs = {}
for mode in ("dense", "zeroed"):
    env = gridworld.make_open_grid(5, reward_mode=mode)
    logs[mode] = agent.train_agent(env, cfg, seed=0)

print(f"{'step':>6} {'dense_dim':>10} {'zeroed_dim':>11} "
      f"{'dense_return':>13} {'zeroed_td':>10}")
for dense_row, zero_row in zip(logs["dense"].rows, logs["zeroed"].rows):
    print(f"{dense_row['step']:>6} {dense_row['effective_dim']:>10} "
          f"{zero_row['effective_dim']:>11} "
          f"{dense_row['episode_return']:>13.3f} {zero_row['td_loss']:>10.2e}")

final_dense = logs["dense"].rows[-1]["effective_dim"]
final_zero = logs["zeroed"].rows[-1]["effective_dim"]
print(f"\nfinal effective_dim: dense {final_dense}, zeroed {final_zero}")
