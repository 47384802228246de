"""Item ground costs, user-to-user transport distances and dimension diagnostics.

A user is the uniform measure over the items they clicked; two users are
compared by the optimal transport cost between those measures under the item
ground cost. :func:`dimension_profile` estimates how many balls of radius eta
are needed to cover a user sample in that metric, and how fast that count
grows as eta shrinks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .ot import EXACT_MAX_SUPPORT, DiscreteMeasure, exact_wasserstein, sinkhorn, transport_cost

DEFAULT_TAU = 0.05
DEFAULT_GRID_SIZE = 8
GRID_TOP = 0.99  # largest radius allowed on a default grid


@dataclass(frozen=True)
class ItemGeometry:
    embeddings: np.ndarray | None
    cost: np.ndarray

    @property
    def num_items(self) -> int:
        return self.cost.shape[0]


@dataclass(frozen=True)
class UserPointCloud:
    user_id: int
    items: np.ndarray

    def __post_init__(self):
        items = np.unique(np.asarray(self.items, dtype=np.int64))
        if items.size == 0:
            raise ValueError(f"user {self.user_id} has no items")
        object.__setattr__(self, "items", items)

    @property
    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure.uniform(self.items)


@dataclass
class DimensionDiagnostics:
    eta_grid: np.ndarray
    covering_numbers: np.ndarray
    tau: float
    d_eta_values: np.ndarray
    d_star_estimate: float
    scale: float = 1.0

    def write_tsv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(("eta", "covering_number", "d_eta"))
            for eta, n, d in zip(self.eta_grid, self.covering_numbers, self.d_eta_values):
                w.writerow((repr(float(eta)), int(n), repr(float(d))))
            w.writerow(("# d_star_estimate", repr(float(self.d_star_estimate)), ""))


def build_cost_from_embeddings(embeddings, item_ids=None) -> ItemGeometry:
    """Euclidean distances between item embedding rows."""
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 2:
        raise ValueError(f"need an (I >= 2, k) embedding matrix, got shape {e.shape}")
    bad = np.flatnonzero(~np.all(np.isfinite(e), axis=1))
    if bad.size:
        label = bad[0] if item_ids is None else item_ids[bad[0]]
        raise ValueError(f"non-finite embedding for item {label}")
    cost = cdist(e, e)
    cost = np.triu(cost, 1)
    cost = cost + cost.T
    return ItemGeometry(e, cost)


def build_cost_from_cooccurrence(interactions) -> ItemGeometry:
    """``1 - cosine`` between binary item columns, for catalogs without metadata."""
    x = interactions.to_dense() if hasattr(interactions, "to_dense") else np.asarray(interactions, float)
    gram = x.T @ x
    norms = np.sqrt(np.diag(gram))
    empty = np.flatnonzero(norms == 0)
    if empty.size:
        ids = getattr(interactions, "item_ids", None)
        label = empty[0] if ids is None else ids[empty[0]]
        raise ValueError(f"item {label} has no interactions")
    cost = 1.0 - gram / norms[:, None] / norms[None, :]
    cost = np.clip(cost, 0.0, None)
    cost = np.triu(cost, 1)
    return ItemGeometry(None, cost + cost.T)


def multi_hot_embeddings(tags_per_item, vocabulary=None) -> np.ndarray:
    """L2-normalized multi-hot rows from per-item tag lists (e.g. genres)."""
    vocab = sorted({t for tags in tags_per_item for t in tags}) if vocabulary is None else list(vocabulary)
    pos = {t: j for j, t in enumerate(vocab)}
    e = np.zeros((len(tags_per_item), len(vocab)))
    for i, tags in enumerate(tags_per_item):
        for t in tags:
            e[i, pos[t]] = 1.0
    norms = np.linalg.norm(e, axis=1)
    return e / np.where(norms > 0, norms, 1.0)[:, None]


def read_embeddings_csv(path, item_ids=None):
    """Read ``item_id, v1, ..., vk`` rows; a non-numeric first line is a header.

    With ``item_ids`` the rows are returned in that order and every id must be
    present. Returns ``(ids, embeddings)``.
    """
    ids, vecs = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                iid = int(row[0])
                vec = [float(v) for v in row[1:]]
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: malformed embedding row") from None
            if vecs and len(vec) != len(vecs[0]):
                raise ValueError(f"{path}:{lineno}: expected {len(vecs[0])} values, got {len(vec)}")
            ids.append(iid)
            vecs.append(vec)
    ids = np.array(ids, dtype=np.int64)
    e = np.array(vecs, dtype=np.float64)
    if item_ids is None:
        return ids, e
    where = {int(i): r for r, i in enumerate(ids)}
    missing = [int(i) for i in item_ids if int(i) not in where]
    if missing:
        raise ValueError(f"{path}: no embedding for items {missing[:10]}")
    order = [where[int(i)] for i in item_ids]
    return np.asarray(item_ids, dtype=np.int64), e[order]


def _cloud(u) -> UserPointCloud:
    return u if isinstance(u, UserPointCloud) else UserPointCloud(-1, u)


def user_distance(a, b, g: ItemGeometry, epsilon: float = 0.01, exact: bool = False) -> float:
    """Transport distance between two users' item measures.

    The default is the transport cost ``<P, C>`` of the entropic plan at
    ``epsilon``; ``exact=True`` solves the linear program instead (clouds of at
    most 64 items each).
    """
    a, b = _cloud(a), _cloud(b)
    c = g.cost[np.ix_(a.items, b.items)]
    if exact:
        if a.items.size > EXACT_MAX_SUPPORT or b.items.size > EXACT_MAX_SUPPORT:
            raise ValueError("exact user distance limited to 64 items per user")
        return exact_wasserstein(a.measure, b.measure, c)
    res = sinkhorn(a.measure, b.measure, c, epsilon)
    return transport_cost(res.plan, c)


def pairwise_user_distances(users, g: ItemGeometry, exact: bool = True, epsilon: float = 0.01) -> np.ndarray:
    users = [_cloud(u) for u in users]
    n = len(users)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if np.array_equal(users[i].items, users[j].items):
                continue
            d[i, j] = d[j, i] = user_distance(users[i], users[j], g, epsilon, exact)
    return d


def covering_number(distances, eta: float) -> int:
    """Greedy upper bound on the number of radius-``eta`` balls covering the sample.

    Balls are centered at sample points; each round picks the center covering
    the most uncovered points (lowest index on ties).
    """
    d = np.asarray(distances, dtype=np.float64)
    n = d.shape[0]
    if n == 0:
        return 0
    within = d <= eta
    uncovered = np.ones(n, dtype=bool)
    count = 0
    while uncovered.any():
        gain = within[:, uncovered].sum(axis=1)
        best = int(np.argmax(gain))
        uncovered &= ~within[best]
        count += 1
    return count


def default_eta_grid(distances, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Log-spaced radii from the 95th down to the 5th percentile of distances."""
    d = np.asarray(distances)
    off = d[np.triu_indices(d.shape[0], 1)]
    off = off[off > 0]
    if off.size == 0:
        return np.geomspace(0.5, 0.01, size)
    lo, hi = np.percentile(off, [5, 95])
    hi = min(hi, GRID_TOP)
    if not hi > lo:
        lo = hi / 2.0
    return np.geomspace(hi, lo, size)


def dimension_profile(users=None, g: ItemGeometry | None = None, eta_grid=None, tau: float = DEFAULT_TAU,
                      distances=None, scale: float | None = None, exact: bool = True,
                      epsilon: float = 0.01) -> DimensionDiagnostics:
    """Covering numbers and (eta, tau)-dimensions of a user sample.

    Distances are used in their own units and divided by ``scale`` only as
    much as needed to bring the default grid (whose top is the 95th
    percentile of pairwise distances) below 1, where ``-log eta`` is
    positive. Comparisons between samples
    (e.g. before and after an embedding collapse) should share one ``scale``
    and one ``eta_grid``. For every eta the ``floor(tau * n)`` users with the
    largest nearest-neighbor distance are set aside, the rest are covered
    greedily, and ``d_eta = log N / -log eta``. Greedy counts are made
    monotone in eta by a running minimum from the small-radius end (a cover at
    a smaller radius is also a cover at a larger one). ``d_star_estimate`` is
    the largest ``d_eta`` over the three smallest radii.

    Pass either ``users`` with ``g`` or a precomputed ``distances`` matrix.
    """
    if distances is None:
        if users is None or g is None:
            raise ValueError("need users and geometry, or a distance matrix")
        distances = pairwise_user_distances(users, g, exact=exact, epsilon=epsilon)
    d = np.asarray(distances, dtype=np.float64)
    n = d.shape[0]
    if n < 2:
        raise ValueError("need at least 2 users")
    if scale is None:
        off = d[np.triu_indices(n, 1)]
        scale = max(1.0, float(np.percentile(off, 95)) / GRID_TOP) if off.size else 1.0
    d = d / scale
    grid = default_eta_grid(d) if eta_grid is None else np.asarray(eta_grid, dtype=np.float64)
    if np.any(grid <= 0) or np.any(grid >= 1):
        raise ValueError("every eta must lie in (0, 1) so that -log(eta) > 0")
    if np.any(np.diff(grid) >= 0):
        raise ValueError("eta_grid must be strictly decreasing")
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    n_drop = int(np.floor(tau * n))
    if n_drop:
        nn = np.where(np.eye(n, dtype=bool), np.inf, d).min(axis=1)
        keep = np.sort(np.argsort(-nn, kind="stable")[n_drop:])
        d = d[np.ix_(keep, keep)]
    greedy = np.array([covering_number(d, eta) for eta in grid])
    counts = np.minimum.accumulate(greedy[::-1])[::-1]
    d_eta = np.log(counts) / -np.log(grid)
    d_star = float(np.max(d_eta[-3:]))
    return DimensionDiagnostics(grid, counts, tau, d_eta, d_star, scale)
