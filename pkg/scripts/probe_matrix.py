"""One-off probe: run the comparative AL matrix and print criterion margins."""
import sys
import time

import numpy as np

from alcrf.corpus import SyntheticConfig, generate_synthetic
from alcrf.loop import ExperimentConfig, run_experiment
from alcrf.metrics import distribution_snapshot

SCHEMA = {
    "PER": 0.40, "LOC": 0.20, "ORG": 0.12, "GPE": 0.09,
    "FAC": 0.07, "EVT": 0.05, "PRD": 0.055, "MISC": 0.015,
}

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
strategies = sys.argv[2].split(",") if len(sys.argv) > 2 else ["RAND", "LC", "LTP"]

cfg = SyntheticConfig(n_sentences=3000, schema=SCHEMA, ambiguous_fraction=0.7,
                      lexicon_size=60, n_filler=80, n_cues=10, p_cue=1.0,
                      p_cue_shared=0.0, min_len=8, max_len=14,
                      proportional_lexicons=True, max_entities_per_sentence=3,
                      p_extra_entity=1.0, p_empty=0.4)
t0 = time.time()
d = generate_synthetic(cfg, seed=2024)
print(f"corpus: {time.time()-t0:.1f}s, {len(d.sentences)} sentences")
overall = distribution_snapshot(list(d.sentences), d.schema)
print("overall dist:", {k: round(v, 4) for k, v in sorted(overall.items())})

logs = {}
for name in strategies:
    ecfg = ExperimentConfig(strategy=name, n_seeds=n_seeds)
    t0 = time.time()
    logs[name] = run_experiment(d, ecfg)
    print(f"{name}: {time.time()-t0:.1f}s")


def seed_mean(log, metric, it):
    return float(np.mean([log.runs[k][it].__dict__[metric] for k in log.runs]))


n_iter = 8
if "LC" in logs and "LTP" in logs and "RAND" in logs:
    for m in ("token_f1", "entity_f1", "sentence_accuracy"):
        print(f"--- {m} (iterations 1..8) ---")
        for name in strategies:
            vals = [round(seed_mean(logs[name], m, it), 4) for it in range(1, n_iter + 1)]
            print(f"{name:5s}", vals)
    lc_dom = sum(seed_mean(logs["LC"], "token_f1", it) > seed_mean(logs["RAND"], "token_f1", it)
                 for it in range(1, n_iter + 1))
    ltp_dom = sum(seed_mean(logs["LTP"], "token_f1", it) > seed_mean(logs["RAND"], "token_f1", it)
                  for it in range(1, n_iter + 1))
    print(f"7a: LC dominates RAND {lc_dom}/8, LTP dominates RAND {ltp_dom}/8 (need >=6 each)")
    wins = sum(logs["LTP"].runs[k][n_iter].sentence_accuracy
               >= logs["LC"].runs[k][n_iter].sentence_accuracy for k in logs["LTP"].runs)
    print(f"7b: LTP final sent-acc >= LC in {wins}/{n_seeds} pairings (need >=7/10)")

    def mean_offset(log):
        vals = [r.offset for k in log.runs for r in log.runs[k]
                if r.offset is not None and 2 <= r.iteration <= 8]
        return float(np.mean(vals))
    mo = {name: mean_offset(logs[name]) for name in strategies}
    print("7c: mean offset iters 2..8:", {k: round(v, 4) for k, v in mo.items()},
          "(need LTP <= RAND)")

    rare = min(overall, key=overall.get)
    print(f"rarest type: {rare} at {overall[rare]:.4f}")
    hits = 0
    for it in range(1, n_iter + 1):
        props = [logs["LTP"].runs[k][it].selected_distribution.get(rare, 0.0)
                 for k in logs["LTP"].runs]
        p = float(np.mean(props))
        flag = p > overall[rare]
        hits += flag
        print(f"  iter {it}: LTP selected {rare} prop {p:.4f} vs corpus {overall[rare]:.4f} {'OK' if flag else 'MISS'}")
    print(f"8: {hits}/8 iterations above corpus proportion (need >=6)")
