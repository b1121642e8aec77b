"""Sparse indicator features driving the CRF emission scores."""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Dataset, is_punct

BOS = "<BOS>"
EOS = "<EOS>"
BIAS = "bias"


class FeatureError(Exception):
    pass


def fire_template(tokens, position: int) -> list[str]:
    """Feature names fired at one position by the default template."""
    if not 0 <= position < len(tokens):
        raise FeatureError(f"position {position} out of range for {len(tokens)} tokens")
    tok = tokens[position]
    names = [BIAS, f"w0={tok}", f"low={tok.lower()}"]
    for k in (1, 2, 3):
        if len(tok) >= k:
            names.append(f"pre{k}={tok[:k]}")
            names.append(f"suf{k}={tok[-k:]}")
    if tok.isdigit():
        names.append("isdigit")
    if is_punct(tok):
        names.append("ispunct")
    for off in (-2, -1, 1, 2):
        j = position + off
        if j < 0:
            ctx = BOS
        elif j >= len(tokens):
            ctx = EOS
        else:
            ctx = tokens[j]
        names.append(f"w{off:+d}={ctx}")
    prev = tokens[position - 1] if position > 0 else BOS
    names.append(f"bg={prev}|{tok}")
    return names


@dataclass(frozen=True)
class FeatureIndex:
    """Frozen feature-name to dense-id map; unseen names are dropped."""

    ids: dict[str, int]

    def __len__(self):
        return len(self.ids)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for name, fid in sorted(self.ids.items(), key=lambda kv: kv[1]):
                f.write(f"{name}\t{fid}\n")

    @classmethod
    def load(cls, path) -> "FeatureIndex":
        ids = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                name, _, fid = line.rpartition("\t")
                ids[name] = int(fid)
        return cls(ids)


def build_feature_index(d: Dataset) -> FeatureIndex:
    """Index every feature fired on d (plus bias); ids by sorted name."""
    if len(d) == 0:
        raise FeatureError("cannot build a feature index from an empty dataset")
    names = {BIAS}
    for s in d.sentences:
        for pos in range(len(s)):
            names.update(fire_template(s.tokens, pos))
    return FeatureIndex({name: i for i, name in enumerate(sorted(names))})


def featurize(tokens, position: int, idx: FeatureIndex) -> list[int]:
    """Sorted, deduplicated ids of fired features present in idx."""
    fired = fire_template(tokens, position)
    return sorted({idx.ids[n] for n in fired if n in idx.ids})


@dataclass(frozen=True)
class FeaturizedSentence:
    sentence_id: int
    feature_ids: tuple[tuple[int, ...], ...]  # one tuple per token position

    def __len__(self):
        return len(self.feature_ids)


def featurize_sentence(tokens, sentence_id: int, idx: FeatureIndex) -> FeaturizedSentence:
    return FeaturizedSentence(
        sentence_id,
        tuple(tuple(featurize(tokens, p, idx)) for p in range(len(tokens))),
    )
