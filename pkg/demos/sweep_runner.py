"""Config-driven experiment runs: planning, caching, and artifacts.

Writes a JSON config with a small parameter sweep, plans it, executes it
twice (the second pass is served from the per-run done markers), and
renders the combined CSV plus one SVG chart per metric column.  The
command-line equivalent of the execution step is

    plab td-sim --config <path> --out <dir>
"""

import json
import tempfile
from pathlib import Path

from plab import runner

config_text = json.dumps({
    "kind": "td-sim",
    "params": {"num_states": 4, "feature_dim": 3, "num_heads": 32,
               "dt": 0.01, "T": 2.0, "snapshot_stride": 50},
    "seeds": [0, 1],
    "sweep": {"gamma": [0.8, 0.99]},
}, indent=2)
cfg = runner.parse_config(config_text)

planned = runner.run_experiment(cfg, dry_run=True)
print(f"planned {len(planned)} runs:")
for rec in planned:
    print(f"  run_{rec.run_id} seed={rec.seed} overrides={rec.overrides}")

out = Path(tempfile.mkdtemp(prefix="plab_demo_"))
records = runner.run_experiment(cfg, out_dir=out)
print("\nfirst pass: ", [r.status for r in records])
records = runner.run_experiment(cfg, out_dir=out)
print("second pass:", [r.status for r in records])

for path in runner.write_outputs(records, "csv", out):
    print(f"\nwrote {path}")
    lines = path.read_text().splitlines()
    print("  " + "\n  ".join(lines[:3]) + f"\n  ... {len(lines) - 1} data rows")
svgs = runner.write_outputs(records, "svg", out)
print(f"wrote {len(svgs)} charts, e.g. {svgs[0].name}")
