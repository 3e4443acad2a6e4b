"""Feature-rank metrics on a fixed random network.

Builds a feature matrix from resampled inputs, prints the two rank
summaries (threshold count and spectral mass), and shows how the
threshold count stabilizes as the sample grows.
"""

import numpy as np

from plab import capacity, nn

spec = nn.MlpSpec((16, 24, 24, 1))
params = nn.init_params(spec, seed=3)
rng = np.random.default_rng(0)

print(f"network {spec.layer_widths}, feature width {spec.feature_width}")
print(f"{'n':>6} {'effective_dim':>14} {'srank':>6}  top singular values")
for n in (64, 256, 1024, 4096):
    inputs = rng.uniform(0.0, 1.0, size=(n, 16))
    fm = capacity.build_feature_matrix(params, spec, inputs)
    report = capacity.rank_report(fm, epsilon=0.01, delta=0.01)
    head = ", ".join(f"{s:.3f}" for s in report.singular_values[:5])
    print(f"{n:>6} {report.effective_dim:>14} {report.srank:>6}  [{head}, ...]")

# The count is covariant with scale: doubling the features and the
# threshold together changes nothing.
inputs = rng.uniform(0.0, 1.0, size=(512, 16))
fm = capacity.build_feature_matrix(params, spec, inputs)
base = capacity.effective_dim(fm, 0.01)
scaled = capacity.effective_dim(2.0 * fm.data, 0.02)
print(f"\nscale covariance: dim(phi, 0.01) = {base}, dim(2*phi, 0.02) = {scaled}")

# Tightening the threshold can only add directions.
dims = [capacity.effective_dim(fm, eps) for eps in (0.5, 0.1, 0.02, 0.0)]
print(f"dims at eps 0.5 / 0.1 / 0.02 / 0 : {dims}")

row = capacity.rank_report(fm).csv_row()
print(f"\ncsv row ({len(row)} fields): {row[:5]} ...")
