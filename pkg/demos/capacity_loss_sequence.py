"""Iterated regression onto fresh random targets degrades fitting ability.

A small learner trains on a sequence of targets drawn from a fixed
random-network family; each iteration starts from the previous
parameters with a fresh optimizer.  The final training error climbs
across iterations while the feature rank drifts down: the network
gradually loses the capacity it had at initialization.  Larger budgets
make the trend sharper; this scale keeps the demo under a minute.
"""

import numpy as np

from plab import nn, tasks

dataset = tasks.synth_inputs(seed=0, n=500, dim=32, num_clusters=8)
learner = nn.MlpSpec((32, 24, 24, 1))

result = tasks.run_sequence(
    learner, learner_seed=0, task_kind="random_net", dataset=dataset,
    num_iterations=15, steps_per_iter=1500, batch_size=64, task_seed=0)

print(f"{'iter':>4} {'final_mse':>12} {'effective_dim':>14} {'srank':>6}")
for rec in result.records:
    print(f"{rec.iteration:>4} {rec.final_mse:>12.5f} "
          f"{rec.effective_dim:>14} {rec.srank:>6}")

mses = result.final_mses()
first, last = np.mean(mses[:3]), np.mean(mses[-3:])
print(f"\nmean final error, first 3 iterations: {first:.5f}")
print(f"mean final error, last 3 iterations:  {last:.5f}  ({last / first:.2f}x)")
