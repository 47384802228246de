"""Synthetic datasets with known structure.

* :func:`clustered_dataset` - users with interests in one of a few item
  clusters, items embedded so that clusters are separated in space.
* :func:`manifold_users` - users whose item clouds are centered at points of a
  known ``dim``-dimensional region, for checking the dimension diagnostics.
* :func:`grid_users` - users spread over a 2-D grid of items.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionMatrix
from .numerics import make_rng


@dataclass
class ClusteredDataset:
    matrix: InteractionMatrix
    embeddings: np.ndarray        # cluster-aligned item embeddings
    item_cluster: np.ndarray
    user_cluster: np.ndarray


def clustered_dataset(n_users: int = 2000, n_items: int = 200, n_clusters: int = 5,
                      seed: int = 0, emb_dim: int = 2, cluster_separation: float = 4.0,
                      within_spread: float = 1.0, locality: float = 0.5,
                      min_clicks: int = 8, max_clicks: int = 20, noise_rate: float = 0.05,
                      popularity_weight: float = 0.0) -> ClusteredDataset:
    """Users drawn from ``n_clusters`` interest groups over a clustered catalog.

    Items get a cluster label and an embedding ``center[c] + within_spread * u``
    with ``u`` uniform in the unit ``emb_dim``-cube; centers sit on a circle of
    radius ``cluster_separation`` in the first two axes. A user picks a cluster
    and an anchor point inside it, then clicks items of that cluster with
    probability proportional to ``popularity**popularity_weight * exp(-|E_i - anchor|^2 / (2 locality^2))``
    where ``popularity`` is a Pareto draw per item. The default weight 0 gives
    no popularity skew; a positive weight adds it without changing any other
    random draw;
    a ``noise_rate`` share of clicks lands on uniformly random items.
    """
    rng = make_rng(seed)
    item_cluster = np.arange(n_items) % n_clusters
    angles = 2 * np.pi * np.arange(n_clusters) / n_clusters
    centers = np.zeros((n_clusters, max(emb_dim, 2)))
    centers[:, 0] = cluster_separation * np.cos(angles)
    centers[:, 1] = cluster_separation * np.sin(angles)
    centers = centers[:, :max(emb_dim, 2)]
    offsets = within_spread * (rng.random((n_items, centers.shape[1])) - 0.5)
    emb = centers[item_cluster] + offsets
    popularity = (rng.pareto(2.0, n_items) + 1.0) ** popularity_weight

    rows = []
    user_cluster = rng.integers(0, n_clusters, n_users)
    for u in range(n_users):
        c = user_cluster[u]
        members = np.flatnonzero(item_cluster == c)
        anchor = centers[c] + within_spread * (rng.random(centers.shape[1]) - 0.5)
        d2 = ((emb[members] - anchor) ** 2).sum(1)
        w = popularity[members] * np.exp(-d2 / (2 * locality ** 2))
        w /= w.sum()
        n_clicks = int(rng.integers(min_clicks, max_clicks + 1))
        n_noise = int(rng.binomial(n_clicks, noise_rate))
        n_main = min(n_clicks - n_noise, np.count_nonzero(w))
        main = rng.choice(members, size=n_main, replace=False, p=w)
        noise = rng.choice(n_items, size=n_noise, replace=False)
        rows.append(np.union1d(main, noise))
    matrix = InteractionMatrix.from_rows(rows, np.arange(n_users), np.arange(n_items))
    return ClusteredDataset(matrix, emb, item_cluster, user_cluster)


def shuffled_embeddings(embeddings, seed: int = 0) -> np.ndarray:
    """Same embedding vectors assigned to a random permutation of the items."""
    return np.asarray(embeddings)[make_rng(seed).permutation(len(embeddings))]


@dataclass
class ManifoldSample:
    embeddings: np.ndarray
    clouds: list                  # item-index arrays, one per user
    centers: np.ndarray


def manifold_users(dim: int, n_users: int = 300, n_items: int = 600, ambient: int = 3,
                   cloud_size: int = 4, seed: int = 0) -> ManifoldSample:
    """Users concentrated near a ``dim``-dimensional region of item space.

    Items are uniform in ``[0, 1]^ambient``. The first ``dim`` coordinates of
    each user's center are uniform in ``[0, 1]`` and the rest are fixed at 0.5,
    so the centers fill a ``dim``-dimensional cube. A user clicks the
    ``cloud_size`` items nearest its center.
    """
    if not 1 <= dim <= ambient:
        raise ValueError("need 1 <= dim <= ambient")
    rng = make_rng(seed)
    emb = rng.random((n_items, ambient))
    centers = np.full((n_users, ambient), 0.5)
    centers[:, :dim] = rng.random((n_users, dim))
    d2 = ((centers[:, None, :] - emb[None, :, :]) ** 2).sum(-1)
    clouds = [np.sort(np.argsort(row, kind="stable")[:cloud_size]) for row in d2]
    return ManifoldSample(emb, clouds, centers)


def grid_users(side: int = 20, n_users: int = 300, cloud_size: int = 4, seed: int = 0) -> ManifoldSample:
    """Items on a ``side x side`` grid of the unit square, users uniform over it.

    Each user clicks the ``cloud_size`` grid items nearest a uniform center, so
    the user sample is two-dimensional.
    """
    rng = make_rng(seed)
    ticks = np.linspace(0.0, 1.0, side)
    emb = np.stack(np.meshgrid(ticks, ticks), axis=-1).reshape(-1, 2)
    centers = rng.random((n_users, 2))
    d2 = ((centers[:, None, :] - emb[None, :, :]) ** 2).sum(-1)
    clouds = [np.sort(np.argsort(row, kind="stable")[:cloud_size]) for row in d2]
    return ManifoldSample(emb, clouds, centers)
