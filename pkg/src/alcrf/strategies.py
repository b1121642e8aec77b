"""Uncertainty scoring of pool sentences and batch selection.

Strategies: RAND baseline, least confidence (LC), length-normalized least
confidence (NLC), minimum token probability (MTP), and lowest token
probability under the Viterbi path (LTP).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crf import DecodeResult

STRATEGIES = ("RAND", "LC", "NLC", "MTP", "LTP")
H_MODES = ("posterior_marginal", "emission_softmax")
NLC_MODES = ("geometric_mean", "literal")


class StrategyError(Exception):
    pass


@dataclass(frozen=True)
class SelectionScore:
    sentence_id: int
    strategy: str
    score: float


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str = "LTP"
    h_mode: str = "posterior_marginal"
    nlc_mode: str = "geometric_mean"
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise StrategyError(f"unknown strategy {self.strategy!r}")
        if self.h_mode not in H_MODES:
            raise StrategyError(f"unknown h_mode {self.h_mode!r}")
        if self.nlc_mode not in NLC_MODES:
            raise StrategyError(f"unknown nlc_mode {self.nlc_mode!r}")


def _h(dr: DecodeResult, h_mode: str) -> np.ndarray:
    if h_mode == "posterior_marginal":
        return dr.marginals
    if h_mode == "emission_softmax":
        return dr.emission_softmax
    raise StrategyError(f"unknown h_mode {h_mode!r}")


def score_lc(dr: DecodeResult) -> float:
    """1 - P(y*|x)."""
    return 1.0 - dr.sequence_posterior


def score_nlc(dr: DecodeResult, n: int, mode: str = "geometric_mean") -> float:
    """Length-normalized least confidence.

    geometric_mean: 1 - P(y*|x)^(1/n), removing LC's length bias.
    literal: 1 - P(y*|x)/n, the formula as printed.
    """
    if n < 1:
        raise StrategyError("sentence length must be >= 1")
    if mode == "geometric_mean":
        return 1.0 - float(np.exp((dr.path_logscore - dr.log_z) / n))
    if mode == "literal":
        return 1.0 - dr.sequence_posterior / n
    raise StrategyError(f"unknown nlc_mode {mode!r}")


def score_mtp(dr: DecodeResult, h_mode: str = "posterior_marginal") -> float:
    """1 - min_i max_j h[i][j]: worst best-label confidence over positions."""
    return 1.0 - float(_h(dr, h_mode).max(axis=1).min())


def score_ltp(dr: DecodeResult, h_mode: str = "posterior_marginal") -> float:
    """1 - min_i h[i][y*_i]: worst confidence along the Viterbi path."""
    h = _h(dr, h_mode)
    return 1.0 - float(h[np.arange(len(dr.path)), dr.path].min())


def score_rand(rng: np.random.Generator) -> float:
    """Uniform [0, 1) draw; deterministic given the generator state."""
    return float(rng.random())


def score_pool(
    decoded: list[tuple[int, DecodeResult]],
    cfg: StrategyConfig,
    rng: np.random.Generator | None = None,
) -> list[SelectionScore]:
    """Score decoded pool sentences; RAND consumes rng in ascending-id order."""
    decoded = sorted(decoded, key=lambda pair: pair[0])
    if cfg.strategy == "RAND":
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        return [
            SelectionScore(sid, "RAND", score_rand(rng)) for sid, _ in decoded
        ]
    out = []
    for sid, dr in decoded:
        if cfg.strategy == "LC":
            s = score_lc(dr)
        elif cfg.strategy == "NLC":
            s = score_nlc(dr, len(dr), cfg.nlc_mode)
        elif cfg.strategy == "MTP":
            s = score_mtp(dr, cfg.h_mode)
        elif cfg.strategy == "LTP":
            s = score_ltp(dr, cfg.h_mode)
        else:
            raise StrategyError(cfg.strategy)
        out.append(SelectionScore(sid, cfg.strategy, s))
    return out


def select_batch(scores: list[SelectionScore], b: int) -> list[int]:
    """Ids of the b highest scores; ties break toward the lower sentence id."""
    if not scores:
        raise StrategyError("empty pool")
    if b < 1:
        raise StrategyError("batch size must be >= 1")
    ranked = sorted(scores, key=lambda s: (-s.score, s.sentence_id))
    return [s.sentence_id for s in ranked[: min(b, len(ranked))]]
