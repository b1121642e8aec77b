import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from alcrf import corpus

TABLE1_TEXT = (
    "Trump\tB-PER\n"
    "was\tO\n"
    "born\tO\n"
    "in\tO\n"
    "the\tB-LOC\n"
    "United\tI-LOC\n"
    "States\tI-LOC\n"
)


@pytest.fixture
def table1_dataset():
    return corpus.parse_conll(TABLE1_TEXT)


@pytest.fixture
def two_sentence_dataset():
    """Table-1 sentence plus an all-O 3-token sentence."""
    return corpus.parse_conll(TABLE1_TEXT + "\nfoo\tO\nbar\tO\nbaz\tO\n")


def make_separable_dataset(n_sentences=30, seed=0):
    """Token identity fully determines the tag: learnable to accuracy 1."""
    import numpy as np

    rng = np.random.default_rng(seed)
    sentences = []
    for sid in range(n_sentences):
        n = int(rng.integers(3, 7))
        tokens, tags = [], []
        for _ in range(n):
            if rng.random() < 0.3:
                tokens.append("alice")
                tags.append("B-PER")
            else:
                tokens.append(f"f{int(rng.integers(4))}")
                tags.append("O")
        sentences.append(corpus.LabeledSentence(sid, tuple(tokens), tuple(tags)))
    return corpus.Dataset(tuple(sentences), ("PER",))
