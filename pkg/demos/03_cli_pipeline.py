"""
The command-line pipeline
=========================

Writes a small JSON config and drives every stage through the ``ssmhelm``
entry point, the same as running ``ssmhelm <stage> -c config.json`` in a
shell. Everything lands in a temporary directory. The scene is tiny and dense
with events, so its accuracies say little; see the benchmark demo for those.
"""

import json
import tempfile
from pathlib import Path

from ssmhelm.cli import main

work = Path(tempfile.mkdtemp(prefix="ssmhelm-demo-"))

###############################################################################
# A synthetic scene stands in for a trajectory CSV. ``input.csv`` would point
# at a real file instead. Keys left out take their defaults.

config = {
    "seed": 0,
    "output_dir": "run",
    "input": {"synth": {"duration": 8.0, "vehicles_per_lane": 30}},
    "features": {"ttc_encoding": "inverse"},
    "labels": {"accel_floor": 2.0},
    "split": {"normal_ratio": 1.0},
    "helm": {"widths": [32, 32], "classifier_width": 300, "gamma": 1.0},
    "baseline": {"k_starts": 50},
}
cfg = work / "config.json"
cfg.write_text(json.dumps(config, indent=1))

###############################################################################
# Each stage reads the previous stage's files from the output directory.

for stage in ("ingest", "featurize", "label", "train", "evaluate"):
    print(f"\n$ ssmhelm {stage} -c {cfg.name}")
    code = main([stage, "-c", str(cfg)])
    if code:
        raise SystemExit(code)

###############################################################################
# ``report`` re-renders the tables from the stored per-sample results.

main(["report", "-c", str(cfg), "--svg"])
for path in sorted((work / "run").rglob("*"))[:12]:
    print(path.relative_to(work))
