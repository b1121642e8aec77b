"""Evaluation and analysis metrics.

Token F1 is micro-averaged with O excluded from credit; entity F1 is
exact-span, exact-type; sentence accuracy requires the whole tag sequence
to match.  Distribution snapshots and the adjacent-iteration sampling
offset back the selection-stability analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import OUTSIDE, LabeledSentence, extract_entities


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f1)


def _check_aligned(pred, gold):
    if len(pred) != len(gold):
        raise MetricsError(f"{len(pred)} predictions for {len(gold)} gold sentences")
    for i, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise MetricsError(f"sentence {i}: {len(p)} predicted tags for {len(g)}")


def token_f1(pred: list[list[str]], gold: list[list[str]]) -> PRF:
    """Micro token F1 with O excluded: a correct non-O tag is the only TP."""
    _check_aligned(pred, gold)
    tp = fp = fn = 0
    for p_tags, g_tags in zip(pred, gold):
        for p, g in zip(p_tags, g_tags):
            if p == g:
                if g != OUTSIDE:
                    tp += 1
            else:
                if p != OUTSIDE:
                    fp += 1
                if g != OUTSIDE:
                    fn += 1
    return PRF.from_counts(tp, fp, fn)


def token_f1_macro(pred: list[list[str]], gold: list[list[str]]) -> PRF:
    """Macro average over non-O tags (non-default alternate)."""
    _check_aligned(pred, gold)
    tags = sorted({t for seq in gold for t in seq if t != OUTSIDE})
    if not tags:
        return PRF(0.0, 0.0, 0.0)
    parts = []
    for tag in tags:
        tp = fp = fn = 0
        for p_tags, g_tags in zip(pred, gold):
            for p, g in zip(p_tags, g_tags):
                if p == tag and g == tag:
                    tp += 1
                elif p == tag:
                    fp += 1
                elif g == tag:
                    fn += 1
        parts.append(PRF.from_counts(tp, fp, fn))
    n = len(parts)
    return PRF(
        sum(x.precision for x in parts) / n,
        sum(x.recall for x in parts) / n,
        sum(x.f1 for x in parts) / n,
    )


def entity_f1(pred: list[list[str]], gold: list[list[str]]) -> PRF:
    """Exact span + type match, micro-averaged. No entities anywhere -> all 0."""
    _check_aligned(pred, gold)
    tp = fp = fn = 0
    for p_tags, g_tags in zip(pred, gold):
        p_spans = set(extract_entities(p_tags))
        g_spans = set(extract_entities(g_tags))
        tp += len(p_spans & g_spans)
        fp += len(p_spans - g_spans)
        fn += len(g_spans - p_spans)
    return PRF.from_counts(tp, fp, fn)


def sentence_accuracy(pred: list[list[str]], gold: list[list[str]]) -> float:
    """Fraction of sentences with every token tagged correctly."""
    _check_aligned(pred, gold)
    if not gold:
        raise MetricsError("no sentences")
    hits = sum(1 for p, g in zip(pred, gold) if list(p) == list(g))
    return hits / len(gold)


def distribution_snapshot(
    selected: list[LabeledSentence], schema
) -> dict[str, float]:
    """Entity-type proportions among all entities in the selection."""
    counts = {t: 0 for t in schema}
    total = 0
    for s in selected:
        for etype, _, _ in extract_entities(s.tags):
            counts[etype] += 1
            total += 1
    if total == 0:
        return {}
    return {t: c / total for t, c in counts.items()}


def sampling_offset(prev: dict[str, float], curr: dict[str, float]) -> float:
    """L1 distance between adjacent selection distributions (0 to 2)."""
    keys = set(prev) | set(curr)
    return sum(abs(curr.get(k, 0.0) - prev.get(k, 0.0)) for k in keys)


CURVE_METRICS = (
    "token_f1",
    "entity_f1",
    "sentence_accuracy",
    "cumulative_tokens",
    "cumulative_entities",
)


def learning_curve_report(
    runs: dict[int, list[dict]],
    schema,
    overall: dict[str, float] | None = None,
) -> tuple[str, dict]:
    """Aggregate per-seed iteration records into seed-mean/std curves.

    `runs` maps seed -> list of IterationRecord dicts (see loop module).
    Returns (csv text, summary dict).  When `overall` (corpus entity
    distribution) is given, per-type deviation columns selected-minus-overall
    are included.
    """
    if not runs or not any(runs.values()):
        raise MetricsError("empty experiment log")
    n_iters = {len(recs) for recs in runs.values()}
    if len(n_iters) != 1:
        raise MetricsError("runs have differing iteration counts")
    iterations = sorted({r["iteration"] for recs in runs.values() for r in recs})

    def mean_std(values):
        xs = [v for v in values if v is not None]
        if not xs:
            return None, None
        m = sum(xs) / len(xs)
        var = sum((x - m) ** 2 for x in xs) / len(xs)
        return m, var**0.5

    header = ["iteration"]
    for m in CURVE_METRICS:
        header += [f"{m}_mean", f"{m}_std"]
    header += ["offset_mean", "offset_std"]
    for t in schema:
        header.append(f"prop_{t}_mean")
        if overall is not None:
            header.append(f"dev_{t}_mean")

    rows = []
    summary = {"iterations": []}
    for it in iterations:
        recs = [recs[it] for recs in (sorted(r, key=lambda x: x["iteration"]) for r in runs.values())]
        entry: dict = {"iteration": it}
        row = [str(it)]
        for m in CURVE_METRICS:
            mu, sd = mean_std([r[m] for r in recs])
            entry[f"{m}_mean"], entry[f"{m}_std"] = mu, sd
            row += [repr(mu), repr(sd)]
        mu, sd = mean_std([r["offset"] for r in recs])
        entry["offset_mean"], entry["offset_std"] = mu, sd
        row += ["" if mu is None else repr(mu), "" if sd is None else repr(sd)]
        for t in schema:
            props = [r["selected_distribution"].get(t) for r in recs
                     if r["selected_distribution"]]
            mu, _ = mean_std(props)
            entry[f"prop_{t}_mean"] = mu
            row.append("" if mu is None else repr(mu))
            if overall is not None:
                dev = None if mu is None else mu - overall.get(t, 0.0)
                entry[f"dev_{t}_mean"] = dev
                row.append("" if dev is None else repr(dev))
        rows.append(",".join(row))
        summary["iterations"].append(entry)
    csv_text = ",".join(header) + "\n" + "\n".join(rows) + "\n"
    return csv_text, summary
