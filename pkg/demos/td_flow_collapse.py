"""Linear TD feature dynamics: collapse without rewards, a rank-1 anchor with.

Integrates the ensemble flow for a small random Markov reward process and
compares against the closed-form many-head limit.  With zero rewards every
feature dimension decays to zero; with rewards the features converge to a
rank-1 matrix aligned with the value function.
"""

import numpy as np

from plab import capacity, dynamics

mrp = dynamics.random_mrp(seed=1, num_states=5, gamma=0.9)
rng = np.random.default_rng(2)
phi0 = rng.normal(size=(5, 4))
phi0 /= np.linalg.norm(phi0)

# Zero rewards: simulate with a moderate ensemble, compare to the limit.
state = dynamics.init_flow_state(seed=3, phi0=phi0, num_heads=256,
                                 alpha=1.0 / 256, beta=1.0)
trajectory = dynamics.simulate_ensemble_flow(mrp, state, dt=1e-3, T=8.0,
                                             fixed_weights=True,
                                             snapshot_stride=2000)
print(f"{'t':>6} {'|phi|':>10} {'dim':>4} {'|phi - limit|':>14}")
for snap in trajectory:
    limit = dynamics.closed_form_phi(mrp, phi0, snap.t)
    gap = np.max(np.abs(snap.phi - limit))
    dim = capacity.effective_dim(snap.phi, 0.01)
    print(f"{snap.t:>6.1f} {np.linalg.norm(snap.phi):>10.5f} {dim:>4} {gap:>14.2e}")

far = dynamics.closed_form_phi(mrp, phi0, 100.0)
print(f"\nclosed form at T=100: |phi| = {np.linalg.norm(far):.2e}, "
      f"effective_dim = {capacity.effective_dim(far, 0.01)}")

# Rewarded case: the scaled-variance limit lands on a rank-1 anchor.
rewarded = dynamics.random_mrp(seed=1, num_states=5, gamma=0.9, reward_scale=1.0)
noise = dynamics.draw_noise(seed=4, d=4)
anchor = np.outer(np.linalg.solve(np.eye(5) - 0.9 * rewarded.P, rewarded.R),
                  noise.eps)
settled = dynamics.closed_form_phi(rewarded, phi0, 200.0, reward_case=True,
                                   noise=noise)
print(f"rewarded case at T=200: anchor gap {np.max(np.abs(settled - anchor)):.2e}, "
      f"effective_dim {capacity.effective_dim(settled, 0.01)}")
