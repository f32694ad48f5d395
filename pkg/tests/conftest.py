import os

import pytest

from taggnn import data as data_mod
from taggnn.graph import Vocabulary

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def toydata_dir():
    return os.path.join(FIXTURES, "toydata")


@pytest.fixture
def toy_dataset(toydata_dir):
    return data_mod.load_dataset(toydata_dir)


@pytest.fixture
def toy_setup(toy_dataset):
    """Dataset, splits, vocab and masked graph for the committed toy fixture."""
    splits = data_mod.make_splits(toy_dataset, (8, 2, 2), seed=11)
    vocab = Vocabulary.from_texts(toy_dataset.texts(), min_count=1)
    graph = data_mod.dataset_to_graph(toy_dataset, vocab, splits=splits)
    return toy_dataset, splits, vocab, graph


def random_tiny_graph(rng, with_queries=True):
    """A small random tripartite graph with token lists, for property tests."""
    from taggnn.graph import build_graph

    nq = int(rng.integers(1, 4)) if with_queries else 0
    ni = int(rng.integers(2, 5))
    nt = int(rng.integers(2, 5))
    n_words = int(rng.integers(4, 9))

    def toks():
        return list(rng.integers(1, n_words, size=rng.integers(1, 4)))

    queries = [toks() for _ in range(nq)]
    items = [toks() for _ in range(ni)]
    tags = [toks() for _ in range(nt)]

    qi = []
    for q in range(nq):
        for i in range(ni):
            if rng.random() < 0.5:
                qi.append((q, i, float(rng.integers(1, 6))))
    it = []
    for i in range(ni):
        for t in range(nt):
            if rng.random() < 0.5:
                it.append((i, t))
    graph = build_graph(queries, items, tags, qi, it)
    graph.standardize_weights()
    return graph, n_words
