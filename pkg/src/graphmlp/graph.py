"""Graph container, adjacency algebra, batch slicing and edge corruption.

Sparse matrices are ``scipy.sparse.csr_matrix`` objects kept in canonical
form: sorted column indices, no duplicate entries, no stored zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .tensor import DTYPE, Rng, ShapeError

UNLABELED = -1
PRUNE_TOL = 1e-12


class GraphError(ValueError):
    """A graph, split or index argument is malformed."""


@dataclass
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in ("train", "val", "test"):
            raise KeyError(name)
        return getattr(self, name)

    def __eq__(self, other):
        if not isinstance(other, Splits):
            return NotImplemented
        return all(np.array_equal(self[k], other[k]) for k in ("train", "val", "test"))


@dataclass
class Graph:
    """Node features, labels, undirected edges and an optional split.

    ``edges`` is an ``(m, 2)`` integer array. Unlabeled nodes carry ``-1``.
    """

    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    num_classes: int
    splits: Splits | None = None
    name: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=DTYPE)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.num_classes = int(self.num_classes)
        self.validate()

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        if self.features.ndim != 2:
            raise GraphError("features must be an n x d matrix")
        if not np.all(np.isfinite(self.features)):
            raise GraphError("features contain NaN or Inf")
        if self.labels.shape != (self.n,):
            raise GraphError(f"expected {self.n} labels, got {self.labels.shape}")
        bad = (self.labels != UNLABELED) & ((self.labels < 0) | (self.labels >= self.num_classes))
        if bad.any():
            raise GraphError(f"label out of range [0, {self.num_classes}) at node {int(np.flatnonzero(bad)[0])}")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= self.n:
                raise GraphError(f"edge endpoint outside [0, {self.n})")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise GraphError("self-loop in edge list")
        if self.splits is not None:
            self._validate_splits(self.splits)

    def _validate_splits(self, s: Splits) -> None:
        parts = [s.train, s.val, s.test]
        for p in parts:
            if p.size and (p.min() < 0 or p.max() >= self.n):
                raise GraphError("split index outside node range")
            if np.unique(p).size != p.size:
                raise GraphError("duplicate index inside a split")
        joined = np.concatenate(parts)
        if np.unique(joined).size != joined.size:
            raise GraphError("splits overlap")
        if np.any(self.labels[s.train] == UNLABELED):
            raise GraphError("unlabeled node in train split")

    def with_splits(self, splits: Splits) -> "Graph":
        return Graph(self.features, self.labels, self.edges, self.num_classes,
                     splits, self.name, dict(self.meta))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.edges, other.edges)
            and self.splits == other.splits
        )


def canonical_edges(edges, n: int) -> np.ndarray:
    """Deduplicate undirected pairs into sorted ``(i, j)`` rows with ``i < j``."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if e.min() < 0 or e.max() >= n:
        raise GraphError(f"edge endpoint outside [0, {n})")
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def _canonical(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=DTYPE)
    m.sum_duplicates()
    if m.nnz:
        m.data[np.abs(m.data) < PRUNE_TOL] = 0.0
    m.eliminate_zeros()
    m.sort_indices()
    return m


def build_adjacency(g: Graph) -> sp.csr_matrix:
    """Symmetric 0/1 adjacency with zero diagonal."""
    e = canonical_edges(g.edges, g.n)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    a = sp.csr_matrix((np.ones(rows.size, dtype=DTYPE), (rows, cols)), shape=(g.n, g.n))
    return _canonical(a)


def normalize_adjacency(a: sp.spmatrix) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``."""
    n = a.shape[0]
    if a.shape != (n, n):
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    a_tilde = sp.csr_matrix(a, dtype=DTYPE) + sp.identity(n, dtype=DTYPE, format="csr")
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    coo = a_tilde.tocoo()
    # one sqrt of an exact integer product keeps e.g. 1/sqrt(2*2) == 0.5 exactly
    vals = coo.data / np.sqrt(deg[coo.row] * deg[coo.col])
    return _canonical(sp.csr_matrix((vals, (coo.row, coo.col)), shape=(n, n)))


def sparse_power(a_hat: sp.spmatrix, r: int) -> sp.csr_matrix:
    """``a_hat ** r`` by repeated sparse products; entries below 1e-12 are pruned."""
    if int(r) != r or r < 1:
        raise ValueError(f"power r must be an integer >= 1, got {r}")
    if a_hat.shape[0] != a_hat.shape[1]:
        raise ShapeError(f"matrix must be square, got {a_hat.shape}")
    base = _canonical(a_hat)
    out = base
    for _ in range(int(r) - 1):
        out = _canonical(out @ base)
    return out


def extract_submatrix(m: sp.spmatrix, ids) -> np.ndarray:
    """Dense ``m[ids][:, ids]``."""
    ids = np.asarray(ids, dtype=np.int64)
    n = m.shape[0]
    if ids.ndim != 1:
        raise GraphError("ids must be one-dimensional")
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise GraphError(f"index outside [0, {n})")
    if np.unique(ids).size != ids.size:
        raise GraphError("duplicate index in ids")
    m = sp.csr_matrix(m)
    return np.ascontiguousarray(m[ids][:, ids].toarray(), dtype=DTYPE)


def corrupt_adjacency(a: sp.spmatrix, delta: float, rng: Rng) -> sp.csr_matrix:
    """Randomly rewrite a ``delta`` fraction of adjacency positions.

    Each strictly-upper-triangular position is selected with probability
    ``delta``; a selected position is overwritten by a fair coin flip. The
    result is mirrored to the lower triangle and the diagonal is left alone.
    Draws are consumed row by row, so memory stays O(n) beyond the output.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    a = _canonical(a)
    n = a.shape[0]
    if delta == 0.0:
        return a.copy()

    upper = sp.triu(a, k=1, format="csr")
    add_rows, add_cols, drop_rows, drop_cols = [], [], [], []
    for i in range(n - 1):
        width = n - i - 1
        selected = np.flatnonzero(rng.random(width) < delta)
        if selected.size == 0:
            continue
        coins = rng.random(selected.size) < 0.5
        cols = selected + i + 1
        add_cols.append(cols[coins])
        add_rows.append(np.full(int(coins.sum()), i, dtype=np.int64))
        drop_cols.append(cols[~coins])
        drop_rows.append(np.full(int((~coins).sum()), i, dtype=np.int64))

    def _coo(rows, cols):
        r = np.concatenate(rows) if rows else np.zeros(0, np.int64)
        c = np.concatenate(cols) if cols else np.zeros(0, np.int64)
        return sp.csr_matrix((np.ones(r.size, dtype=DTYPE), (r, c)), shape=(n, n))

    drop = _coo(drop_rows, drop_cols)
    add = _coo(add_rows, add_cols)
    # zero out every selected position, then set the coin-heads ones
    kept = upper - upper.multiply(drop) - upper.multiply(add)
    new_upper = _canonical(kept + add)
    new_upper.data[:] = 1.0
    diag = sp.diags(a.diagonal(), format="csr")
    return _canonical(new_upper + new_upper.T + diag)


def dense(m: sp.spmatrix) -> np.ndarray:
    return np.asarray(m.toarray(), dtype=DTYPE)
