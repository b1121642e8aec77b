"""Diagnostic: per-iteration selected-type distributions and offsets."""
import sys

import numpy as np

from alcrf.corpus import SyntheticConfig, generate_synthetic
from alcrf.loop import ExperimentConfig, run_experiment

SCHEMA = {
    "PER": 0.40, "LOC": 0.20, "ORG": 0.12, "GPE": 0.09,
    "FAC": 0.07, "EVT": 0.05, "PRD": 0.055, "MISC": 0.016,
}
cfg = SyntheticConfig(n_sentences=3000, schema=SCHEMA, ambiguous_fraction=0.4,
                      lexicon_size=60, n_filler=80, n_cues=10, p_cue=1.0,
                      p_cue_shared=0.0, min_len=8, max_len=14,
                      proportional_lexicons=True)
d = generate_synthetic(cfg, seed=2024)
n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3

for name in ("RAND", "LTP"):
    log = run_experiment(d, ExperimentConfig(strategy=name, n_seeds=n_seeds))
    print(f"=== {name} ===")
    types = sorted(SCHEMA)
    for it in range(1, 9):
        dists = [log.runs[k][it].selected_distribution for k in log.runs]
        mean = {t: float(np.mean([dd.get(t, 0.0) for dd in dists])) for t in types}
        offs = [log.runs[k][it].offset for k in log.runs]
        off = "" if offs[0] is None else f"off={float(np.mean(offs)):.3f}"
        row = " ".join(f"{t}={mean[t]:.2f}" for t in types)
        print(f"it{it}: {row} {off}")
