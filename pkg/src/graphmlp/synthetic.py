"""Synthetic citation-like graphs for tests and demos.

Nodes belong to one of ``num_classes`` communities. Edges follow a planted
partition (mostly within-class), features are sparse binary bag-of-words
vectors drawn from class-specific topic distributions, heavily mixed with
background noise so that features alone are only weakly informative.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph, canonical_edges
from .ingest import make_planetoid_splits
from .tensor import DTYPE, Rng


def citation_graph(n: int = 600, num_classes: int = 4, d: int = 300, avg_degree: float = 4.0,
                   homophily: float = 0.85, words_per_node: int = 12, signal: float = 0.25,
                   seed: int = 0, splits: tuple[int, int, int] | None = (20, 100, 200)) -> Graph:
    """Draw a planted-partition graph with noisy bag-of-words features.

    ``signal`` is the probability that a node's word is drawn from its own
    class topic instead of the shared background vocabulary. ``splits`` is
    ``(per_class_train, num_val, num_test)`` or ``None``.
    """
    rng = Rng(seed)
    labels = rng.integers(0, num_classes, n)
    # make sure every class has members
    labels[:num_classes] = np.arange(num_classes)

    m = int(round(avg_degree * n / 2))
    src = rng.integers(0, n, m)
    same = rng.random(m) < homophily
    by_class = [np.flatnonzero(labels == c) for c in range(num_classes)]
    dst = np.empty(m, dtype=np.int64)
    for k in range(m):
        if same[k]:
            pool = by_class[labels[src[k]]]
            dst[k] = pool[rng.integers(0, pool.size)]
        else:
            dst[k] = rng.integers(0, n)
    edges = canonical_edges(np.stack([src, dst], axis=1), n)

    topic_width = max(1, d // (2 * num_classes))
    x = np.zeros((n, d), dtype=DTYPE)
    for i in range(n):
        from_topic = rng.random(words_per_node) < signal
        topic_words = labels[i] * topic_width + rng.integers(0, topic_width, words_per_node)
        noise_words = rng.integers(0, d, words_per_node)
        x[i, np.where(from_topic, topic_words, noise_words)] = 1.0

    g = Graph(x, labels, edges, num_classes, None, "synthetic")
    if splits is not None:
        g = g.with_splits(make_planetoid_splits(g, *splits, rng=rng.spawn(7)))
    return g
