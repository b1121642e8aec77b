"""Diagnostic: inspect what LC vs LTP actually select at a given iteration."""
import numpy as np

from alcrf import crf, strategies
from alcrf.corpus import SyntheticConfig, generate_synthetic, split
from alcrf.loop import ExperimentConfig, LoopRunner, ALState, GoldOracle, run_single

SCHEMA = {
    "PER": 0.40, "LOC": 0.20, "ORG": 0.12, "GPE": 0.09,
    "FAC": 0.07, "EVT": 0.05, "PRD": 0.055, "MISC": 0.016,
}
cfg = SyntheticConfig(n_sentences=3000, schema=SCHEMA, ambiguous_fraction=0.5,
                      n_filler=80, n_cues=10, p_cue=1.0, min_len=8, max_len=14)
d = generate_synthetic(cfg, seed=2024)

ecfg = ExperimentConfig(strategy="RAND", n_seeds=1, n_seed_labeled=40)
# replicate split used by run_single for run_seed 0
seed_ds, pool_ds, test_ds = split(d, ecfg.base_seed + 0, ecfg.n_seed_labeled, ecfg.n_test)

# grow labeled set with 2 RAND iterations to mimic mid-run state
log = run_single(d, ExperimentConfig(strategy="RAND", n_seeds=1, n_iterations=2,
                                     n_seed_labeled=40), 0)
labeled = set(s.id for s in seed_ds.sentences)
records = log.runs[0] if hasattr(log, "runs") else log
for rec in records:
    labeled.update(rec.selected_ids)
pool = [s.id for s in d.sentences if s.id not in labeled
        and s.id in {x.id for x in pool_ds.sentences}]

from alcrf.corpus import Dataset
universe = Dataset(tuple(s for s in d.sentences
                         if s.id in labeled or s.id in set(pool)), d.schema)
runner = LoopRunner(universe, test_ds, ecfg)
state = ALState(
    labeled_ids=sorted(labeled),
    pool_ids=sorted(pool),
    iteration=2,
    annotations={sid: list(d.by_id(sid).tags) for sid in labeled},
    history=[],
)
model, local = runner._train(state)
fss = [runner.cache.featurize(sid, local) for sid in sorted(state.pool_ids)]
decoded = list(zip(sorted(state.pool_ids), crf.decode_batch(model, fss)))

# which cue words has the model seen in training?
seen_tokens = set()
for sid in labeled:
    seen_tokens.update(d.by_id(sid).tokens)

all_cues = {f"c{i}" for i in range(8 * cfg.n_cues)}

def describe(name, scfg):
    rng = np.random.default_rng(0)
    scores = strategies.score_pool(decoded, scfg, rng)
    sel = strategies.select_batch(scores, 20)
    lens, ents, unseen_cues, unseen_toks = [], [], set(), 0
    for sid in sel:
        s = d.by_id(sid)
        lens.append(len(s.tokens))
        ents.append(sum(t.startswith("B-") for t in s.tags))
        for tok in s.tokens:
            if tok not in seen_tokens:
                unseen_toks += 1
                if tok in all_cues:
                    unseen_cues.add(tok)
    print(f"{name:4s} len={np.mean(lens):.1f} ents/sent={np.mean(ents):.2f} "
          f"total_ents={sum(ents)} distinct_unseen_cues={len(unseen_cues)} "
          f"unseen_tokens={unseen_toks}")

describe("LC", strategies.StrategyConfig("LC"))
describe("LTP", strategies.StrategyConfig("LTP"))
describe("MTP", strategies.StrategyConfig("MTP"))

# token-level: where are the minima for LTP's selection?
scores = strategies.score_pool(decoded, strategies.StrategyConfig("LTP"),
                               np.random.default_rng(0))
sel = set(strategies.select_batch(scores, 20))
dec = dict(decoded)
shown = 0
for sid in sorted(sel):
    s = d.by_id(sid)
    dr = dec[sid]
    h = dr.marginals[np.arange(len(s.tokens)), dr.path]
    i = int(np.argmin(h))
    print(f"sid={sid} min_tok={s.tokens[i]!r} gold={s.tags[i]} "
          f"pred={runner.labels[dr.path[i]]} h={h[i]:.3f} "
          f"seen={s.tokens[i] in seen_tokens}")
    shown += 1
    if shown >= 12:
        break
