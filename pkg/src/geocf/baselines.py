"""Reference scorers: item-based kNN with cosine similarity, and popularity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

KNN_GRID = (5, 50, 200, 1000)


def _dense(train) -> np.ndarray:
    if hasattr(train, "to_dense"):
        return train.to_dense()
    x = np.asarray(train, dtype=np.float64)
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("interaction matrix must be binary")
    return x


@dataclass
class ItemKnnModel:
    k: int
    neighbors: list       # per item: (indices, similarities), descending
    weights: sp.csr_matrix  # weights[i, j] = sim(i, j) for j in neighbors of i


def cosine_similarity(train) -> np.ndarray:
    """Dense item-item cosine of binary columns; zero-norm items give zeros."""
    x = _dense(train)
    gram = x.T @ x
    norms = np.sqrt(np.diag(gram))
    safe = np.where(norms > 0, norms, 1.0)
    sim = gram / safe[:, None] / safe[None, :]
    sim[norms == 0, :] = 0.0
    sim[:, norms == 0] = 0.0
    return sim


def fit_itemknn(train, k: int) -> ItemKnnModel:
    if k < 1:
        raise ValueError("k must be >= 1")
    sim = cosine_similarity(train)
    n = sim.shape[0]
    np.fill_diagonal(sim, 0.0)
    neighbors = []
    rows, cols, vals = [], [], []
    for i in range(n):
        cand = np.flatnonzero(sim[i] > 0)
        order = cand[np.argsort(-sim[i, cand], kind="stable")][:k]
        neighbors.append((order, sim[i, order]))
        rows.extend([i] * order.size)
        cols.extend(order.tolist())
        vals.extend(sim[i, order].tolist())
    weights = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return ItemKnnModel(k, neighbors, weights)


def score_itemknn(model: ItemKnnModel, rows) -> np.ndarray:
    """``score[j] = sum over clicked i of sim(i, j)`` (j among i's neighbors)."""
    rows = np.asarray(rows, dtype=np.float64)
    if not np.all((rows == 0) | (rows == 1)):
        raise ValueError("fold-in rows must be binary")
    single = rows.ndim == 1
    out = np.asarray((model.weights.T @ np.atleast_2d(rows).T).T)
    return out[0] if single else out


def score_popularity(train, rows) -> np.ndarray:
    counts = _dense(train).sum(axis=0)
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        return counts.copy()
    return np.tile(counts, (rows.shape[0], 1))
