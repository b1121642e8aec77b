"""Linear-chain CRF: lattices, exact inference, maximum-likelihood training.

The sequence score is emission(0, y_0) + sum_t [emission(t, y_t) +
A[y_{t-1}, y_t]]; the posterior is that score exponentiated and divided by
Z(x).  Emissions are linear in sparse indicator features; a parity path
accepts precomputed emission matrices instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_softmax

from . import kernels
from .corpus import OUTSIDE, parse_tag
from .features import FeaturizedSentence

MODEL_FORMAT_VERSION = 1


class CrfError(Exception):
    pass


class TrainingDiverged(CrfError):
    pass


@dataclass(frozen=True)
class CrfModel:
    weights: np.ndarray  # [n_features, n_labels]
    trans: np.ndarray  # [n_labels, n_labels]
    labels: tuple[str, ...]
    l2_sigma: float = 10.0

    def __post_init__(self):
        if self.weights.shape[1] != len(self.labels) or self.trans.shape != (
            len(self.labels),
            len(self.labels),
        ):
            raise CrfError(
                f"shape mismatch: weights {self.weights.shape}, trans "
                f"{self.trans.shape}, {len(self.labels)} labels"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.trans).all()):
            raise CrfError("non-finite parameters")
        if self.l2_sigma <= 0:
            raise CrfError("l2_sigma must be positive")

    @property
    def n_features(self):
        return self.weights.shape[0]

    @property
    def n_labels(self):
        return len(self.labels)

    @classmethod
    def zeros(cls, n_features: int, labels, l2_sigma: float = 10.0) -> "CrfModel":
        labels = tuple(labels)
        return cls(
            np.zeros((n_features, len(labels))),
            np.zeros((len(labels), len(labels))),
            labels,
            l2_sigma,
        )

    def save(self, path) -> None:
        np.savez(
            path,
            format_version=np.array([MODEL_FORMAT_VERSION]),
            labels=np.array(self.labels),
            weights=self.weights,
            trans=self.trans,
            l2_sigma=np.array([self.l2_sigma]),
        )

    @classmethod
    def load(cls, path) -> "CrfModel":
        with np.load(path, allow_pickle=False) as z:
            version = int(z["format_version"][0])
            if version != MODEL_FORMAT_VERSION:
                raise CrfError(f"unsupported model format version {version}")
            return cls(
                z["weights"],
                z["trans"],
                tuple(str(x) for x in z["labels"]),
                float(z["l2_sigma"][0]),
            )


@dataclass(frozen=True)
class Lattice:
    emissions: np.ndarray  # [N, n_labels] log-potentials
    trans: np.ndarray  # [n_labels, n_labels]

    def __post_init__(self):
        if self.emissions.ndim != 2 or self.emissions.shape[0] < 1:
            raise CrfError("emissions must be [N >= 1, L]")
        if self.trans.shape != (self.emissions.shape[1], self.emissions.shape[1]):
            raise CrfError("transition matrix does not match label count")


@dataclass(frozen=True)
class DecodeResult:
    path: np.ndarray  # [N] label indices, the Viterbi argmax
    path_logscore: float
    log_z: float
    marginals: np.ndarray  # [N, L] posterior P(y_i = j | x)
    emission_softmax: np.ndarray  # [N, L] per-position softmax of emissions alone

    def __len__(self):
        return len(self.path)

    @property
    def sequence_posterior(self) -> float:
        return float(np.exp(self.path_logscore - self.log_z))


def pack(featurized: list[FeaturizedSentence]):
    """CSR-pack a batch: (feat_flat, feat_offsets [T+1], token_offsets [S+1])."""
    feat_flat = []
    feat_offsets = [0]
    token_offsets = [0]
    for fs in featurized:
        for ids in fs.feature_ids:
            feat_flat.extend(ids)
            feat_offsets.append(len(feat_flat))
        token_offsets.append(token_offsets[-1] + len(fs))
    return (
        np.asarray(feat_flat, dtype=np.int64),
        np.asarray(feat_offsets, dtype=np.int64),
        np.asarray(token_offsets, dtype=np.int64),
    )


def emission_scores(weights, feat_flat, feat_offsets):
    """Per-token emission log-scores: row sums of W over each token's features."""
    if len(feat_offsets) == 1:
        return np.zeros((0, weights.shape[1]))
    rows = weights[feat_flat]
    return np.add.reduceat(rows, feat_offsets[:-1], axis=0)


def build_lattice(m: CrfModel, fs: FeaturizedSentence) -> Lattice:
    for ids in fs.feature_ids:
        for f in ids:
            if f >= m.n_features:
                raise CrfError(f"feature id {f} out of range ({m.n_features})")
    feat_flat, feat_offsets, _ = pack([fs])
    return Lattice(emission_scores(m.weights, feat_flat, feat_offsets), m.trans.copy())


def forward_backward(lat: Lattice):
    """(log_z, marginals [N, L], pairwise [N-1, L, L]) via the active kernel."""
    offsets = np.array([0, lat.emissions.shape[0]], dtype=np.int64)
    log_z, marginals, pairwise = kernels.batch_forward_backward(
        lat.emissions, offsets, lat.trans, True
    )
    return float(log_z[0]), marginals, pairwise


def viterbi(lat: Lattice):
    """(path [N], path_logscore); ties broken toward the lower label index."""
    offsets = np.array([0, lat.emissions.shape[0]], dtype=np.int64)
    paths, scores = kernels.batch_viterbi(lat.emissions, offsets, lat.trans)
    return paths, float(scores[0])


def decode_lattice(lat: Lattice) -> DecodeResult:
    path, path_logscore = viterbi(lat)
    log_z, marginals, _ = forward_backward(lat)
    return DecodeResult(
        path=path,
        path_logscore=path_logscore,
        log_z=log_z,
        marginals=marginals,
        emission_softmax=np.exp(log_softmax(lat.emissions, axis=1)),
    )


def decode(m: CrfModel, fs: FeaturizedSentence) -> DecodeResult:
    return decode_lattice(build_lattice(m, fs))


def decode_batch(m: CrfModel, featurized: list[FeaturizedSentence]) -> list[DecodeResult]:
    """Decode many sentences through one packed kernel call each way."""
    if not featurized:
        return []
    feat_flat, feat_offsets, token_offsets = pack(featurized)
    emis = emission_scores(m.weights, feat_flat, feat_offsets)
    paths, scores = kernels.batch_viterbi(emis, token_offsets, m.trans)
    log_z, marginals, _ = kernels.batch_forward_backward(
        emis, token_offsets, m.trans, False
    )
    soft = np.exp(log_softmax(emis, axis=1))
    out = []
    for s in range(len(featurized)):
        lo, hi = token_offsets[s], token_offsets[s + 1]
        out.append(
            DecodeResult(
                path=paths[lo:hi].copy(),
                path_logscore=float(scores[s]),
                log_z=float(log_z[s]),
                marginals=marginals[lo:hi].copy(),
                emission_softmax=soft[lo:hi].copy(),
            )
        )
    return out


class _PackedBatch:
    """Reusable packed view of a labeled batch for the training objective."""

    def __init__(self, batch: list[tuple[FeaturizedSentence, list[int]]], n_labels: int):
        if not batch:
            raise CrfError("empty training batch")
        for fs, gold in batch:
            if len(fs) != len(gold):
                raise CrfError(
                    f"sentence {fs.sentence_id}: {len(gold)} labels for {len(fs)} tokens"
                )
            if any(not 0 <= g < n_labels for g in gold):
                raise CrfError(f"sentence {fs.sentence_id}: label index out of range")
        self.feat_flat, self.feat_offsets, self.token_offsets = pack(
            [fs for fs, _ in batch]
        )
        self.gold = np.concatenate([np.asarray(g, dtype=np.int64) for _, g in batch])
        self.n_sentences = len(batch)
        # per-token feature counts, for expanding d(emission) rows to features
        self.feat_counts = np.diff(self.feat_offsets)
        # gold transition index pairs, per sentence
        prev, nxt = [], []
        for s in range(self.n_sentences):
            lo, hi = self.token_offsets[s], self.token_offsets[s + 1]
            prev.append(self.gold[lo : hi - 1])
            nxt.append(self.gold[lo + 1 : hi])
        self.gold_prev = np.concatenate(prev) if prev else np.empty(0, dtype=np.int64)
        self.gold_next = np.concatenate(nxt) if nxt else np.empty(0, dtype=np.int64)


def _packed_loglik_grad(weights, trans, sigma, pb: _PackedBatch):
    n_features, n_labels = weights.shape
    emis = emission_scores(weights, pb.feat_flat, pb.feat_offsets)
    log_z, marginals, pairwise = kernels.batch_forward_backward(
        emis, pb.token_offsets, trans, True
    )

    token_idx = np.arange(len(pb.gold))
    gold_emis = emis[token_idx, pb.gold]
    gold_trans = trans[pb.gold_prev, pb.gold_next]
    value = float(gold_emis.sum() + gold_trans.sum() - log_z.sum())

    d_emis = -marginals
    d_emis[token_idx, pb.gold] += 1.0

    grad_w = np.empty_like(weights)
    expanded = np.repeat(d_emis, pb.feat_counts, axis=0)
    for j in range(n_labels):
        grad_w[:, j] = np.bincount(
            pb.feat_flat, weights=expanded[:, j], minlength=n_features
        )

    grad_a = -pairwise.sum(axis=0)
    np.add.at(grad_a, (pb.gold_prev, pb.gold_next), 1.0)

    inv_var = 1.0 / (sigma * sigma)
    value -= 0.5 * inv_var * (float(np.sum(weights * weights)) + float(np.sum(trans * trans)))
    grad_w -= inv_var * weights
    grad_a -= inv_var * trans
    return value, grad_w, grad_a


def log_likelihood_and_gradient(m: CrfModel, batch):
    """L2-penalized log-likelihood of (FeaturizedSentence, gold indices) pairs.

    Returns (value, (grad_weights, grad_trans)).
    """
    pb = _PackedBatch(list(batch), m.n_labels)
    if pb.feat_flat.size and pb.feat_flat.max() >= m.n_features:
        raise CrfError("feature id out of range")
    value, gw, ga = _packed_loglik_grad(m.weights, m.trans, m.l2_sigma, pb)
    return value, (gw, ga)


@dataclass(frozen=True)
class TrainConfig:
    max_iter: int = 150
    gtol: float = 1e-5


def train(init: CrfModel, batch, cfg: TrainConfig = TrainConfig()) -> CrfModel:
    """Full-batch L-BFGS ascent on the penalized log-likelihood."""
    pb = _PackedBatch(list(batch), init.n_labels)
    if cfg.max_iter == 0:
        return init
    n_f, n_l = init.weights.shape

    def objective(theta):
        w = theta[: n_f * n_l].reshape(n_f, n_l)
        a = theta[n_f * n_l :].reshape(n_l, n_l)
        value, gw, ga = _packed_loglik_grad(w, a, init.l2_sigma, pb)
        if not np.isfinite(value):
            raise TrainingDiverged(f"objective became {value}")
        return -value, -np.concatenate([gw.ravel(), ga.ravel()])

    theta0 = np.concatenate([init.weights.ravel(), init.trans.ravel()])
    res = minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": cfg.max_iter, "gtol": cfg.gtol, "ftol": 1e-12},
    )
    theta = res.x
    weights = theta[: n_f * n_l].reshape(n_f, n_l).copy()
    trans = theta[n_f * n_l :].reshape(n_l, n_l).copy()
    if not (np.isfinite(weights).all() and np.isfinite(trans).all()):
        raise TrainingDiverged("non-finite parameters after optimization")
    return replace(init, weights=weights, trans=trans)


def bio_transition_mask(labels, neg=-1e9) -> np.ndarray:
    """Additive [L, L] mask; `neg` on transitions a valid BIO chain forbids."""
    n = len(labels)
    mask = np.zeros((n, n))
    for i, a in enumerate(labels):
        _, a_type = parse_tag(a) if a != OUTSIDE else (None, None)
        for j, b in enumerate(labels):
            if b == OUTSIDE:
                continue
            prefix, b_type = parse_tag(b)
            if prefix == "I" and a_type != b_type:
                mask[i, j] = neg
    return mask


def save_emissions(path, blocks: dict[int, np.ndarray]) -> None:
    """Text emission-matrix file: one "sentence <id> <N>" header per block."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# alcrf-emissions v1\n")
        for sid in sorted(blocks):
            mat = np.asarray(blocks[sid], dtype=float)
            f.write(f"sentence {sid} {mat.shape[0]}\n")
            for row in mat:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")
            f.write("\n")


def load_emission_matrix(path, n_labels: int) -> dict[int, np.ndarray]:
    """Parse an emission-matrix file; every row must have n_labels columns."""
    blocks: dict[int, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] != "sentence":
            raise CrfError(f"bad emission block header: {line!r}")
        sid, n = int(parts[1]), int(parts[2])
        rows = []
        for _ in range(n):
            vals = lines[i].split()
            if len(vals) != n_labels:
                raise CrfError(
                    f"sentence {sid}: expected {n_labels} columns, got {len(vals)}"
                )
            rows.append([float(v) for v in vals])
            i += 1
        blocks[sid] = np.array(rows)
    return blocks
