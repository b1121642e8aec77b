"""Pool-based active learning: train, score the pool, select, label, move.

One experiment = several seeded runs of the same loop; each run keeps a
crash-safe JSON snapshot so human-annotator sessions survive restarts.
Canonical logs (CSV/JSON) contain no wall-clock data, so reruns with the
same seed are byte-identical.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import crf, features, metrics, strategies
from .corpus import Dataset, LabeledSentence, extract_entities, repair_bio, split

SNAPSHOT_VERSION = 1


class LoopError(Exception):
    pass


class OracleError(LoopError):
    pass


class Oracle(Protocol):
    def labels(self, ids: list[int]) -> list[tuple[str, ...]]: ...


class GoldOracle:
    """Simulated annotator: returns stored gold tags immediately."""

    def __init__(self, d: Dataset):
        self._tags = {s.id: s.tags for s in d.sentences}

    def labels(self, ids: list[int]) -> list[tuple[str, ...]]:
        try:
            return [self._tags[i] for i in ids]
        except KeyError as e:
            raise OracleError(f"unknown sentence id {e.args[0]}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: str = "LTP"
    h_mode: str = "posterior_marginal"
    nlc_mode: str = "geometric_mean"
    batch_size: int = 20
    n_iterations: int = 8
    n_seeds: int = 10
    n_seed_labeled: int = 40
    n_test: int = 400
    base_seed: int = 0
    l2_sigma: float = 10.0
    train_max_iter: int = 120
    warm_start: bool = False

    def __post_init__(self):
        strategies.StrategyConfig(self.strategy, self.h_mode, self.nlc_mode)
        if self.batch_size < 1 or self.n_iterations < 0 or self.n_seeds < 1:
            raise LoopError("batch_size >= 1, n_iterations >= 0, n_seeds >= 1 required")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        extra = set(raw) - set(cls.__dataclass_fields__)
        if extra:
            raise LoopError(f"unknown experiment config keys: {sorted(extra)}")
        return cls(**raw)


@dataclass
class IterationRecord:
    iteration: int
    selected_ids: list[int]
    n_labeled: int
    cumulative_tokens: int
    cumulative_entities: int
    token_f1: float
    entity_f1: float
    sentence_accuracy: float
    selected_distribution: dict[str, float]
    offset: float | None
    wall_time: float = 0.0  # informational; never serialized

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "selected_ids": list(self.selected_ids),
            "n_labeled": self.n_labeled,
            "cumulative_tokens": self.cumulative_tokens,
            "cumulative_entities": self.cumulative_entities,
            "token_f1": self.token_f1,
            "entity_f1": self.entity_f1,
            "sentence_accuracy": self.sentence_accuracy,
            "selected_distribution": self.selected_distribution,
            "offset": self.offset,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "IterationRecord":
        return cls(**raw)


@dataclass
class ALState:
    labeled_ids: list[int]
    pool_ids: list[int]
    iteration: int
    annotations: dict[int, tuple[str, ...]]
    history: list[IterationRecord] = field(default_factory=list)
    model: crf.CrfModel | None = None

    def check(self, universe: set[int], seed_size: int, batch_size: int) -> None:
        labeled = set(self.labeled_ids)
        pool = set(self.pool_ids)
        if labeled & pool:
            raise LoopError("labeled and pool sets overlap")
        if labeled | pool != universe:
            raise LoopError("labeled + pool do not cover the corpus")
        expected = seed_size + self.iteration * batch_size
        if len(labeled) != min(expected, len(universe)):
            raise LoopError(
                f"labeled-set size {len(labeled)} != expected {expected}"
            )


class _FeatureCache:
    """Pre-fired template features for every sentence of a corpus.

    Feature names are interned into a global id space once; per iteration a
    frozen index over the labeled subset becomes a simple id remap.  This is
    an optimization only: outputs agree with features.featurize exactly.
    """

    def __init__(self, sentences: list[LabeledSentence]):
        self.name_of: list[str] = []
        self._gid: dict[str, int] = {}
        self.per_sentence: dict[int, list[np.ndarray]] = {}
        for s in sentences:
            rows = []
            for pos in range(len(s)):
                names = set(features.fire_template(s.tokens, pos))
                gids = []
                for n in names:
                    g = self._gid.get(n)
                    if g is None:
                        g = len(self.name_of)
                        self._gid[n] = g
                        self.name_of.append(n)
                    gids.append(g)
                rows.append(np.array(sorted(gids), dtype=np.int64))
            self.per_sentence[s.id] = rows

    def subset_index(self, ids: list[int]) -> tuple[features.FeatureIndex, np.ndarray]:
        """Frozen index over features fired by `ids`, plus gid -> local map."""
        active: set[int] = set()
        for sid in ids:
            for row in self.per_sentence[sid]:
                active.update(int(g) for g in row)
        names = sorted(self.name_of[g] for g in active)
        idx = features.FeatureIndex({n: i for i, n in enumerate(names)})
        local = np.full(len(self.name_of), -1, dtype=np.int64)
        for n, i in idx.ids.items():
            local[self._gid[n]] = i
        return idx, local

    def featurize(self, sid: int, local: np.ndarray) -> features.FeaturizedSentence:
        rows = []
        for gids in self.per_sentence[sid]:
            mapped = local[gids]
            mapped = mapped[mapped >= 0]
            mapped.sort()  # gid order != name order, so remapped ids need a sort
            rows.append(tuple(int(x) for x in mapped))
        return features.FeaturizedSentence(sid, tuple(rows))


class LoopRunner:
    """Runs select-annotate-retrain iterations over one corpus split."""

    def __init__(self, dataset: Dataset, test: Dataset, cfg: ExperimentConfig):
        self.dataset = dataset  # labeled universe: seed set + pool
        self.test = test
        self.cfg = cfg
        self.labels = dataset.labels()
        self.label_of = {t: i for i, t in enumerate(self.labels)}
        self.tokens = {s.id: s.tokens for s in dataset.sentences}
        self.cache = _FeatureCache(list(dataset.sentences) + list(test.sentences))
        self._train_cache: tuple[tuple[int, ...], crf.CrfModel, np.ndarray] | None = None
        self._prev_named_weights: dict | None = None
        # Viterbi proposals for the batch handed to the oracle, keyed by
        # sentence id; annotation frontends show these as pre-annotations.
        self.last_proposals: dict[int, list[str]] = {}
        # Per-token probability of the proposed tag (under the configured
        # h_mode); annotation frontends highlight the minimum.
        self.last_token_probs: dict[int, list[float]] = {}
        self.last_context: dict = {}

    # -- training ---------------------------------------------------------

    def _train(self, state: ALState) -> tuple[crf.CrfModel, np.ndarray]:
        key = tuple(state.labeled_ids)
        if self._train_cache is not None and self._train_cache[0] == key:
            return self._train_cache[1], self._train_cache[2]
        idx, local = self.cache.subset_index(state.labeled_ids)
        batch = []
        for sid in state.labeled_ids:
            fs = self.cache.featurize(sid, local)
            gold = [self.label_of[t] for t in state.annotations[sid]]
            batch.append((fs, gold))
        init = crf.CrfModel.zeros(len(idx), self.labels, self.cfg.l2_sigma)
        if self.cfg.warm_start and self._prev_named_weights is not None:
            w = init.weights.copy()
            prev = self._prev_named_weights
            for name, i in idx.ids.items():
                if name in prev["ids"]:
                    w[i] = prev["weights"][prev["ids"][name]]
            init = crf.CrfModel(w, prev["trans"].copy(), self.labels, self.cfg.l2_sigma)
        model = crf.train(init, batch, crf.TrainConfig(max_iter=self.cfg.train_max_iter))
        if self.cfg.warm_start:
            self._prev_named_weights = {
                "ids": dict(idx.ids),
                "weights": model.weights,
                "trans": model.trans,
            }
        self._train_cache = (key, model, local)
        return model, local

    def _evaluate(self, model: crf.CrfModel, local: np.ndarray):
        fss = [self.cache.featurize(s.id, local) for s in self.test.sentences]
        decoded = crf.decode_batch(model, fss)
        # The raw argmax path can violate BIO chaining; evaluation applies the
        # same orphan-repair policy the annotation surface uses.
        pred = [repair_bio([self.labels[j] for j in dr.path]) for dr in decoded]
        gold = [list(s.tags) for s in self.test.sentences]
        return (
            metrics.token_f1(pred, gold).f1,
            metrics.entity_f1(pred, gold).f1,
            metrics.sentence_accuracy(pred, gold),
        )

    def _cumulative_cost(self, state: ALState) -> tuple[int, int]:
        toks = ents = 0
        for sid in state.labeled_ids:
            toks += len(self.tokens[sid])
            ents += len(extract_entities(state.annotations[sid]))
        return toks, ents

    # -- iterations -------------------------------------------------------

    def baseline(self, state: ALState) -> ALState:
        """Iteration-0 record: train on the seed set, evaluate, select nothing."""
        t0 = time.monotonic()
        model, local = self._train(state)
        tf1, ef1, acc = self._evaluate(model, local)
        toks, ents = self._cumulative_cost(state)
        state.model = model
        state.history.append(
            IterationRecord(
                iteration=0,
                selected_ids=[],
                n_labeled=len(state.labeled_ids),
                cumulative_tokens=toks,
                cumulative_entities=ents,
                token_f1=tf1,
                entity_f1=ef1,
                sentence_accuracy=acc,
                selected_distribution={},
                offset=None,
                wall_time=time.monotonic() - t0,
            )
        )
        return state

    def run_iteration(self, state: ALState, oracle: Oracle, run_seed: int) -> ALState:
        """One select-annotate-retrain pass; the state mutates only after the oracle succeeds."""
        if not state.pool_ids:
            raise LoopError("empty pool")
        t0 = time.monotonic()
        iteration = state.iteration + 1
        model, local = self._train(state)

        pool_fss = [self.cache.featurize(sid, local) for sid in sorted(state.pool_ids)]
        decoded = list(zip(sorted(state.pool_ids), crf.decode_batch(model, pool_fss)))
        scfg = strategies.StrategyConfig(
            self.cfg.strategy, self.cfg.h_mode, self.cfg.nlc_mode
        )
        rng = np.random.default_rng([self.cfg.base_seed, run_seed, iteration])
        scores = strategies.score_pool(decoded, scfg, rng)
        selected = strategies.select_batch(scores, self.cfg.batch_size)

        decoded_by_id = dict(decoded)
        self.last_proposals = {
            sid: [self.labels[j] for j in decoded_by_id[sid].path] for sid in selected
        }
        self.last_token_probs = {}
        for sid in selected:
            dr = decoded_by_id[sid]
            h = (
                dr.marginals
                if self.cfg.h_mode == "posterior_marginal"
                else dr.emission_softmax
            )
            self.last_token_probs[sid] = [
                float(h[i][j]) for i, j in enumerate(dr.path)
            ]
        prev = state.history[-1] if state.history else None
        self.last_context = {
            "iteration": iteration,
            "n_labeled": len(state.labeled_ids),
            "n_pool": len(state.pool_ids),
            "metrics": None
            if prev is None
            else {
                "token_f1": prev.token_f1,
                "entity_f1": prev.entity_f1,
                "sentence_accuracy": prev.sentence_accuracy,
            },
        }
        got = oracle.labels(selected)
        if len(got) != len(selected):
            raise OracleError("oracle returned wrong number of label sequences")
        annotated: dict[int, LabeledSentence] = {}
        for sid, tags in zip(selected, got):
            tokens = self.tokens[sid]
            if len(tags) != len(tokens):
                raise OracleError(
                    f"sentence {sid}: {len(tags)} labels for {len(tokens)} tokens"
                )
            annotated[sid] = LabeledSentence(sid, tokens, tuple(tags))  # validates BIO

        # all labels validated: commit
        for sid in selected:
            state.annotations[sid] = annotated[sid].tags
        state.labeled_ids = state.labeled_ids + selected
        state.pool_ids = [i for i in state.pool_ids if i not in set(selected)]
        state.iteration = iteration

        tf1, ef1, acc = self._evaluate(model, local)
        toks, ents = self._cumulative_cost(state)
        dist = metrics.distribution_snapshot(list(annotated.values()), self.dataset.schema)
        offset = None
        if state.history and state.history[-1].iteration >= 1:
            offset = metrics.sampling_offset(
                state.history[-1].selected_distribution, dist
            )
        state.model = model
        state.history.append(
            IterationRecord(
                iteration=iteration,
                selected_ids=list(selected),
                n_labeled=len(state.labeled_ids),
                cumulative_tokens=toks,
                cumulative_entities=ents,
                token_f1=tf1,
                entity_f1=ef1,
                sentence_accuracy=acc,
                selected_distribution=dist,
                offset=offset,
                wall_time=time.monotonic() - t0,
            )
        )
        return state


@dataclass
class ExperimentLog:
    config: ExperimentConfig
    schema: tuple[str, ...]
    runs: dict[int, list[IterationRecord]]  # run seed index -> history

    CSV_BASE = (
        "seed,iteration,n_labeled,cumulative_tokens,cumulative_entities,"
        "token_f1,entity_f1,sentence_accuracy,offset"
    )

    def csv_header(self) -> str:
        return self.CSV_BASE + "".join(f",prop_{t}" for t in self.schema)

    def to_csv(self) -> str:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return repr(x)
            return str(x)

        lines = [self.csv_header()]
        for seed in sorted(self.runs):
            for r in self.runs[seed]:
                row = [
                    seed, r.iteration, r.n_labeled, r.cumulative_tokens,
                    r.cumulative_entities, r.token_f1, r.entity_f1,
                    r.sentence_accuracy, r.offset,
                ]
                row += [r.selected_distribution.get(t) for t in self.schema]
                lines.append(",".join(fmt(x) for x in row))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "config": self.config.to_dict(),
            "schema": list(self.schema),
            "runs": {
                str(seed): [r.to_dict() for r in recs]
                for seed, recs in sorted(self.runs.items())
            },
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def write(self, out_dir: str, prefix: str) -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{prefix}_runs.csv")
        json_path = os.path.join(out_dir, f"{prefix}_runs.json")
        with open(csv_path, "w", encoding="utf-8") as f:
            f.write(self.to_csv())
        with open(json_path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
        return csv_path, json_path


def _snapshot_path(out_dir: str, strategy: str, seed: int) -> str:
    return os.path.join(out_dir, f"state_{strategy}_seed{seed}.json")


def save_snapshot(path: str, seed: int, state: ALState) -> None:
    payload = {
        "version": SNAPSHOT_VERSION,
        "seed": seed,
        "iteration": state.iteration,
        "labeled_ids": state.labeled_ids,
        "pool_ids": state.pool_ids,
        "annotations": {str(k): list(v) for k, v in state.annotations.items()},
        "history": [r.to_dict() for r in state.history],
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True)
    os.replace(tmp, path)


def load_snapshot(path: str) -> tuple[int, ALState]:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if payload["version"] != SNAPSHOT_VERSION:
        raise LoopError(f"unsupported snapshot version {payload['version']}")
    state = ALState(
        labeled_ids=list(payload["labeled_ids"]),
        pool_ids=list(payload["pool_ids"]),
        iteration=payload["iteration"],
        annotations={int(k): tuple(v) for k, v in payload["annotations"].items()},
        history=[IterationRecord.from_dict(r) for r in payload["history"]],
    )
    return payload["seed"], state


def run_single(
    dataset: Dataset,
    cfg: ExperimentConfig,
    run_seed: int,
    oracle_factory: Callable[[Dataset], Oracle] | None = None,
    out_dir: str | None = None,
    resume: bool = False,
) -> list[IterationRecord]:
    """One seeded AL run; oracle_factory defaults to the gold oracle."""
    labeled, pool, test = split(
        dataset, cfg.base_seed + run_seed, cfg.n_seed_labeled, cfg.n_test
    )
    train_universe = dataset.subset(
        sorted([s.id for s in labeled.sentences] + [s.id for s in pool.sentences])
    )
    runner = LoopRunner(train_universe, test, cfg)
    oracle = (oracle_factory or GoldOracle)(dataset)
    if hasattr(oracle, "attach_runner"):
        oracle.attach_runner(runner)

    snap = _snapshot_path(out_dir, cfg.strategy, run_seed) if out_dir else None
    state = None
    if resume and snap and os.path.exists(snap):
        _, state = load_snapshot(snap)
    if state is None:
        state = ALState(
            labeled_ids=[s.id for s in labeled.sentences],
            pool_ids=[s.id for s in pool.sentences],
            iteration=0,
            annotations={s.id: s.tags for s in labeled.sentences},
        )
        state = runner.baseline(state)
        if snap:
            save_snapshot(snap, run_seed, state)

    universe = {s.id for s in train_universe.sentences}
    while state.iteration < cfg.n_iterations and state.pool_ids:
        state = runner.run_iteration(state, oracle, run_seed)
        state.check(universe, cfg.n_seed_labeled, cfg.batch_size)
        if snap:
            save_snapshot(snap, run_seed, state)
    return state.history


def run_experiment(
    dataset: Dataset,
    cfg: ExperimentConfig,
    oracle_factory: Callable[[Dataset], Oracle] | None = None,
    out_dir: str | None = None,
    resume: bool = False,
) -> ExperimentLog:
    """n_seeds independent runs of the loop with the configured strategy."""
    if cfg.n_seed_labeled + cfg.n_test + cfg.batch_size > len(dataset):
        raise LoopError("dataset too small for the requested configuration")
    runs = {}
    for k in range(cfg.n_seeds):
        runs[k] = run_single(dataset, cfg, k, oracle_factory, out_dir, resume)
    return ExperimentLog(cfg, dataset.schema, runs)
