"""BIO-tagged corpora: parsing, validation, synthesis, splits, statistics.

The on-disk format is two-column CoNLL style: ``token<TAB>tag`` lines,
one blank line between sentences, UTF-8.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

OUTSIDE = "O"


class CorpusError(Exception):
    """Base class for corpus-level failures."""


class ParseError(CorpusError):
    def __init__(self, message, line_no):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class BioValidationError(CorpusError):
    def __init__(self, message, sentence_id=None, position=None):
        super().__init__(message)
        self.sentence_id = sentence_id
        self.position = position


def parse_tag(raw: str) -> tuple[str | None, str | None]:
    """Split a raw tag into (prefix, etype); ("O" -> (None, None)).

    Raises BioValidationError for anything that is not "O" or "B-X"/"I-X".
    """
    if raw == OUTSIDE:
        return None, None
    if len(raw) > 2 and raw[0] in ("B", "I") and raw[1] == "-":
        etype = raw[2:]
        return raw[0], etype
    raise BioValidationError(f"malformed tag {raw!r}")


def validate_bio(tags: list[str], sentence_id=None) -> None:
    """Check the BIO chain rule: I-X must follow B-X or I-X of the same type."""
    prev_etype = None
    for pos, raw in enumerate(tags):
        try:
            prefix, etype = parse_tag(raw)
        except BioValidationError as e:
            raise BioValidationError(
                str(e), sentence_id=sentence_id, position=pos
            ) from None
        if prefix == "I" and etype != prev_etype:
            raise BioValidationError(
                f"invalid BIO transition to {raw!r} at position {pos}"
                + (f" in sentence {sentence_id}" if sentence_id is not None else ""),
                sentence_id=sentence_id,
                position=pos,
            )
        prev_etype = etype if prefix in ("B", "I") else None
    # note: prefix I with matching etype keeps the chain alive


def repair_bio(tags: list[str]) -> list[str]:
    """Map orphan I-X tags to B-X. Idempotent; output always validates."""
    out = []
    prev_etype = None
    for raw in tags:
        prefix, etype = parse_tag(raw)
        if prefix == "I" and etype != prev_etype:
            raw = "B-" + etype
        out.append(raw)
        prev_etype = etype if prefix in ("B", "I") else None
    return out


@dataclass(frozen=True)
class LabeledSentence:
    id: int
    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags) or len(self.tokens) < 1:
            raise BioValidationError(
                f"sentence {self.id}: need equal, nonzero token/tag counts "
                f"({len(self.tokens)} vs {len(self.tags)})",
                sentence_id=self.id,
            )
        validate_bio(list(self.tags), sentence_id=self.id)

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Dataset:
    sentences: tuple[LabeledSentence, ...]
    schema: tuple[str, ...]

    def __post_init__(self):
        seen = set()
        for s in self.sentences:
            if s.id in seen:
                raise CorpusError(f"duplicate sentence id {s.id}")
            seen.add(s.id)
            for raw in s.tags:
                _, etype = parse_tag(raw)
                if etype is not None and etype not in self.schema:
                    raise CorpusError(
                        f"entity type {etype!r} in sentence {s.id} missing from schema"
                    )

    def __len__(self):
        return len(self.sentences)

    def by_id(self, sid: int) -> LabeledSentence:
        for s in self.sentences:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def subset(self, ids) -> "Dataset":
        wanted = set(ids)
        kept = tuple(s for s in self.sentences if s.id in wanted)
        missing = wanted - {s.id for s in kept}
        if missing:
            raise KeyError(f"unknown sentence ids {sorted(missing)}")
        return Dataset(kept, self.schema)

    def labels(self) -> tuple[str, ...]:
        """Tag vocabulary: O first, then B-X/I-X per schema order."""
        out = [OUTSIDE]
        for etype in self.schema:
            out.append("B-" + etype)
            out.append("I-" + etype)
        return tuple(out)


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    n_tokens: int
    n_entity_types: int
    n_entities: int
    avg_sentence_len: float
    avg_entities_per_sentence: float
    avg_entity_len: float
    pct_positive_tokens: float
    pct_sentences_with_entity: float
    pct_sentences_with_2plus_entities: float

    def as_dict(self) -> dict:
        return {
            "n_sentences": self.n_sentences,
            "n_tokens": self.n_tokens,
            "n_entity_types": self.n_entity_types,
            "n_entities": self.n_entities,
            "avg_sentence_len": self.avg_sentence_len,
            "avg_entities_per_sentence": self.avg_entities_per_sentence,
            "avg_entity_len": self.avg_entity_len,
            "pct_positive_tokens": self.pct_positive_tokens,
            "pct_sentences_with_entity": self.pct_sentences_with_entity,
            "pct_sentences_with_2plus_entities": self.pct_sentences_with_2plus_entities,
        }


def extract_entities(tags) -> list[tuple[str, int, int]]:
    """Maximal B-X (I-X)* spans as (etype, start, end_inclusive), in order."""
    tags = list(tags)
    validate_bio(tags)
    spans = []
    start = None
    cur_type = None
    for pos, raw in enumerate(tags):
        prefix, etype = parse_tag(raw)
        if prefix == "B":
            if start is not None:
                spans.append((cur_type, start, pos - 1))
            start, cur_type = pos, etype
        elif prefix is None:
            if start is not None:
                spans.append((cur_type, start, pos - 1))
            start, cur_type = None, None
        # prefix == "I": span continues (validate_bio guarantees type match)
    if start is not None:
        spans.append((cur_type, start, len(tags) - 1))
    return spans


def parse_conll(text: str, repair: bool = False) -> Dataset:
    """Parse two-column CoNLL text into a Dataset.

    Sentence ids are dense, in file order, from 0.  Schema is the observed
    entity types in first-appearance order.  Invalid BIO chains raise unless
    ``repair`` is set (orphan I-X becomes B-X).
    """
    sentences = []
    schema: list[str] = []
    tokens: list[str] = []
    tags: list[str] = []
    start_line = 1

    def flush():
        if not tokens:
            return
        raw_tags = repair_bio(tags) if repair else list(tags)
        sid = len(sentences)
        sentences.append(LabeledSentence(sid, tuple(tokens), tuple(raw_tags)))
        for raw in raw_tags:
            _, etype = parse_tag(raw)
            if etype is not None and etype not in schema:
                schema.append(etype)
        tokens.clear()
        tags.clear()

    for line_no, line in enumerate(text.split("\n"), start=1):
        if line.strip() == "":
            flush()
            start_line = line_no + 1
            continue
        cols = line.split("\t")
        if len(cols) != 2 or not cols[0] or not cols[1]:
            raise ParseError(f"expected 2 tab-separated columns, got {line!r}", line_no)
        parse_tag(cols[1])  # reject malformed tags early, with a line number
        tokens.append(cols[0])
        tags.append(cols[1])
    flush()
    return Dataset(tuple(sentences), tuple(schema))


def serialize_conll(d: Dataset) -> str:
    """Inverse of parse_conll for datasets whose schema is in first-appearance order."""
    chunks = []
    for s in d.sentences:
        chunks.append("\n".join(f"{tok}\t{tag}" for tok, tag in zip(s.tokens, s.tags)))
        chunks.append("")
    return "\n".join(chunks) + ("\n" if chunks else "")


def dataset_stats(d: Dataset) -> CorpusStats:
    if len(d) == 0:
        raise CorpusError("stats undefined on an empty dataset")
    n_tokens = 0
    n_entities = 0
    n_positive = 0
    n_with_entity = 0
    n_with_2plus = 0
    etypes = set()
    for s in d.sentences:
        n_tokens += len(s)
        spans = extract_entities(s.tags)
        n_entities += len(spans)
        n_positive += sum(end - start + 1 for _, start, end in spans)
        if spans:
            n_with_entity += 1
        if len(spans) >= 2:
            n_with_2plus += 1
        etypes.update(t for t, _, _ in spans)
    n = len(d)
    return CorpusStats(
        n_sentences=n,
        n_tokens=n_tokens,
        n_entity_types=len(etypes),
        n_entities=n_entities,
        avg_sentence_len=n_tokens / n,
        avg_entities_per_sentence=n_entities / n,
        avg_entity_len=(n_positive / n_entities) if n_entities else 0.0,
        pct_positive_tokens=n_positive / n_tokens,
        pct_sentences_with_entity=n_with_entity / n,
        pct_sentences_with_2plus_entities=n_with_2plus / n,
    )


def split(d: Dataset, seed: int, n_seed_labeled: int, n_test: int):
    """Disjoint (labeled, pool, test) partition, uniform without replacement."""
    if n_seed_labeled + n_test > len(d):
        raise CorpusError(
            f"cannot draw {n_seed_labeled}+{n_test} sentences from {len(d)}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(d))
    ids = [d.sentences[i].id for i in perm]
    labeled = sorted(ids[:n_seed_labeled])
    test = sorted(ids[n_seed_labeled : n_seed_labeled + n_test])
    pool = sorted(ids[n_seed_labeled + n_test :])
    return d.subset(labeled), d.subset(pool), d.subset(test)


@dataclass
class SyntheticConfig:
    """Recipe for the synthetic NER corpus generator.

    ``schema`` maps entity-type name to a positive sampling weight; realized
    entity-type proportions approximate the normalized weights.  Entities are
    drawn from disjoint per-type lexicons and embedded in filler tokens.
    """

    n_sentences: int
    schema: dict[str, float] = field(default_factory=dict)
    min_len: int = 6
    max_len: int = 16
    max_entities_per_sentence: int = 3
    p_extra_entity: float = 0.55
    lexicon_size: int = 24
    max_entity_len: int = 3
    n_filler: int = 200
    ambiguous_fraction: float = 0.25
    n_cues: int = 3
    p_cue: float = 0.85
    p_cue_shared: float | None = None
    p_noise: float = 0.0
    proportional_lexicons: bool = False
    p_empty: float = 0.0

    @classmethod
    def from_dict(cls, raw: dict) -> "SyntheticConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise CorpusError(f"unknown synthetic config keys: {sorted(extra)}")
        return cls(**raw)


def generate_synthetic(cfg: SyntheticConfig, seed: int) -> Dataset:
    """Deterministic synthetic BIO corpus (given cfg and seed)."""
    if not cfg.schema:
        raise CorpusError("synthetic schema must be non-empty")
    if cfg.n_sentences <= 0:
        raise CorpusError("n_sentences must be positive")
    if any(w <= 0 for w in cfg.schema.values()):
        raise CorpusError("schema weights must be positive")
    if cfg.min_len < 1 or cfg.max_len < cfg.min_len:
        raise CorpusError("invalid length bounds")

    rng = np.random.default_rng(seed)
    etypes = sorted(cfg.schema)
    weights = np.array([cfg.schema[t] for t in etypes], dtype=float)
    weights /= weights.sum()

    # Per-type lexicons of multi-token entity surfaces. A slice of each
    # lexicon reuses surfaces from a shared "ambiguous" pot so entity words
    # are not perfectly type-identifying.
    lexicons: dict[str, list[tuple[str, ...]]] = {}
    n_shared = max(1, int(cfg.lexicon_size * cfg.ambiguous_fraction))
    shared = [
        tuple(f"xent{i}p{j}" for j in range(int(rng.integers(1, cfg.max_entity_len + 1))))
        for i in range(n_shared * 2)
    ]
    n_own_base = cfg.lexicon_size - n_shared
    for ti, t in enumerate(etypes):
        n_own = n_own_base
        if cfg.proportional_lexicons:
            # Size each type's own lexicon by its frequency so per-surface
            # familiarity is roughly uniform across types.
            n_own = max(4, int(round(n_own_base * float(weights[ti]) * len(etypes))))
        own = [
            tuple(
                f"{t.lower()}w{i}p{j}"
                for j in range(int(rng.integers(1, cfg.max_entity_len + 1)))
            )
            for i in range(n_own)
        ]
        borrowed = [shared[int(k)] for k in rng.choice(len(shared), n_shared, replace=False)]
        lexicons[t] = own + borrowed
    shared_surfaces = set(shared)

    # Type-indicative cue words placed next to entity mentions.  Surfaces from
    # the shared pot are only resolvable from such context, so residual model
    # uncertainty concentrates on learnable decisions rather than pure noise.
    # Cue surfaces are deliberately opaque (no type-revealing affixes): each
    # cue-type association has to be learned from an observed co-occurrence.
    cues = {
        t: [f"c{ti * cfg.n_cues + j}" for j in range(cfg.n_cues)]
        for ti, t in enumerate(etypes)
    }

    fillers = [f"f{i}" for i in range(cfg.n_filler)]
    filler_w = 1.0 / np.arange(1, len(fillers) + 1)  # Zipf-ish
    filler_w /= filler_w.sum()

    sentences = []
    for sid in range(cfg.n_sentences):
        length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        tokens = [str(fillers[i]) for i in rng.choice(len(fillers), length, p=filler_w)]
        tags = [OUTSIDE] * length
        n_ent = 0 if rng.random() < cfg.p_empty else 1
        while 0 < n_ent < cfg.max_entities_per_sentence and rng.random() < cfg.p_extra_entity:
            n_ent += 1
        placed = 0
        attempts = 0
        cue_pos: set[int] = set()
        while placed < n_ent and attempts < 20:
            attempts += 1
            etype = etypes[int(rng.choice(len(etypes), p=weights))]
            surface = lexicons[etype][int(rng.integers(len(lexicons[etype])))]
            elen = len(surface)
            if elen > length:
                continue
            start = int(rng.integers(0, length - elen + 1))
            if any(tags[i] != OUTSIDE for i in range(start, start + elen)):
                continue
            for k in range(elen):
                tokens[start + k] = surface[k]
                tags[start + k] = ("B-" if k == 0 else "I-") + etype
            p_cue = cfg.p_cue
            if surface in shared_surfaces and cfg.p_cue_shared is not None:
                p_cue = cfg.p_cue_shared
            if rng.random() < p_cue:
                cue = cues[etype][int(rng.integers(cfg.n_cues))]
                if start > 0 and tags[start - 1] == OUTSIDE:
                    tokens[start - 1] = cue
                    cue_pos.add(start - 1)
                elif start + elen < length and tags[start + elen] == OUTSIDE:
                    tokens[start + elen] = cue
                    cue_pos.add(start + elen)
            placed += 1
        if cfg.p_noise > 0.0:
            # Replace some plain filler tokens with one-off random surfaces.
            # These keep a mild, never-shrinking per-token uncertainty that
            # inflates whole-sequence uncertainty on noisy sentences without
            # making any single token decision hard.  The per-sentence rate is
            # drawn uniformly from [0, p_noise], so the corpus mixes clean
            # sentences with noise-heavy ones.
            alphabet = np.array(list(string.ascii_lowercase))
            p_sent = rng.uniform(0.0, cfg.p_noise)
            for i in range(length):
                if tags[i] == OUTSIDE and i not in cue_pos and rng.random() < p_sent:
                    n_chars = int(rng.integers(4, 9))
                    tokens[i] = "".join(rng.choice(alphabet, n_chars))
        sentences.append(LabeledSentence(sid, tuple(tokens), tuple(tags)))
    return Dataset(tuple(sentences), tuple(etypes))


_PUNCT = set(string.punctuation)


def is_punct(token: str) -> bool:
    return bool(token) and all(c in _PUNCT for c in token)
