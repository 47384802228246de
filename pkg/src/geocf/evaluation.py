"""Top-K ranking metrics, held-out-user evaluation and subsample bootstrap.

    Recall@K = sum_{k<=K} [r(k) in I1] / min(K, |I1|)
    DCG@K    = sum_{k<=K} (2^[r(k) in I1] - 1) / log(k + 1)
    nDCG@K   = DCG@K / (DCG@K of the ideal ranking)

``[.]`` is the Iverson bracket and ``log`` the natural log (nDCG does not
depend on the base). Ties in scores are broken by ascending item index.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import make_rng

DEFAULT_CUTOFFS = (20, 50, 75, 100)


@dataclass(frozen=True)
class RankedList:
    user_id: int
    items: np.ndarray


@dataclass
class EvalReport:
    cutoffs: tuple
    recall: dict
    ndcg: dict
    recall_ci: dict
    ndcg_ci: dict
    n_users: int
    per_user: dict = field(default_factory=dict, repr=False)

    def rows(self):
        for name, point, ci in (("recall", self.recall, self.recall_ci), ("ndcg", self.ndcg, self.ndcg_ci)):
            for k in self.cutoffs:
                yield name, k, point[k], ci[k][0], ci[k][1]

    def write_tsv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(("metric", "cutoff", "value", "ci_low", "ci_high"))
            for name, k, v, lo, hi in self.rows():
                w.writerow((name, k, f"{v:.6f}", f"{lo:.6f}", f"{hi:.6f}"))


def rank_items(scores, exclude=(), user_id: int = -1) -> RankedList:
    """Items by descending score, ties by ascending index, ``exclude`` removed."""
    scores = np.array(scores, dtype=np.float64)
    scores[np.asarray(exclude, dtype=np.int64)] = -np.inf
    order = np.argsort(-scores, kind="stable")
    keep = np.ones(scores.size, dtype=bool)
    keep[np.asarray(exclude, dtype=np.int64)] = False
    return RankedList(user_id, order[keep[order]])


def _items(ranked):
    return ranked.items if isinstance(ranked, RankedList) else np.asarray(ranked)


def recall_at_k(ranked, positives, k: int) -> float:
    pos = set(int(p) for p in positives)
    if not pos or k < 1:
        raise ValueError("need a nonempty positive set and k >= 1")
    top = _items(ranked)[:k]
    hits = sum(1 for item in top if int(item) in pos)
    return hits / min(k, len(pos))


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log(np.arange(2, k + 2))


def ndcg_at_k(ranked, positives, k: int) -> float:
    pos = set(int(p) for p in positives)
    if not pos or k < 1:
        raise ValueError("need a nonempty positive set and k >= 1")
    top = _items(ranked)[:k]
    # fsum makes the result independent of summation order
    dcg = math.fsum((2.0 ** (int(item) in pos) - 1.0) / math.log(r + 1)
                    for r, item in enumerate(top, start=1))
    idcg = math.fsum(1.0 / math.log(r + 1) for r in range(1, min(k, len(pos)) + 1))
    return dcg / idcg


def _hits_matrix(scores: np.ndarray, fold_rows: list, held_rows: list, kmax: int):
    """Vectorized top-``kmax`` hit indicators, identical to the scalar path."""
    n, n_items = scores.shape
    masked = scores.copy()
    for u, fi in enumerate(fold_rows):
        masked[u, fi] = -np.inf
    order = np.argsort(-masked, axis=1, kind="stable")[:, :kmax]
    pos = np.zeros((n, n_items), dtype=bool)
    for u, ho in enumerate(held_rows):
        pos[u, ho] = True
    hits = np.take_along_axis(pos, order, axis=1)
    # a fold-in item can reach the top only if fewer than kmax items remain
    for u, fi in enumerate(fold_rows):
        if n_items - len(fi) < kmax:
            hits[u, n_items - len(fi):] = False
    return hits


def per_user_metrics(scores, users, cutoffs=DEFAULT_CUTOFFS) -> dict:
    """Recall and nDCG arrays per cutoff for a (users x items) score matrix."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    kmax = max(cutoffs)
    hits = _hits_matrix(scores, [u.fold_in for u in users], [u.held_out for u in users],
                        min(kmax, scores.shape[1]))
    n_pos = np.array([len(u.held_out) for u in users])
    disc = _discounts(kmax)
    out = {}
    for k in cutoffs:
        h = hits[:, :k].astype(np.float64)
        denom = np.minimum(k, n_pos)
        out[("recall", k)] = h.sum(1) / denom
        dcg = (h * disc[:h.shape[1]]).sum(1)
        idcg = np.cumsum(disc)[denom - 1]
        out[("ndcg", k)] = dcg / idcg
    return out


def bootstrap_ci(values, fraction: float = 0.2, repeats: int = 1000, level: float = 0.95,
                 seed: int = 0):
    """Percentile interval of subsample means.

    Each repeat draws ``ceil(fraction * n)`` users without replacement.
    ``values`` may be one array or a dict of arrays sharing the same users, in
    which case every metric sees the same subsamples and a dict of intervals
    is returned.
    """
    if isinstance(values, dict):
        arrs = {k: np.asarray(v, dtype=np.float64) for k, v in values.items()}
    else:
        arrs = {None: np.asarray(values, dtype=np.float64)}
    n = next(iter(arrs.values())).size
    if n < 10:
        raise ValueError(f"bootstrap needs at least 10 users, got {n}")
    size = math.ceil(fraction * n)
    rng = make_rng(seed)
    idx = np.stack([rng.choice(n, size=size, replace=False) for _ in range(repeats)])
    tail = 100.0 * (1.0 - level) / 2.0
    out = {}
    for key, arr in arrs.items():
        means = arr[idx].mean(axis=1)
        lo, hi = np.percentile(means, [tail, 100.0 - tail])
        out[key] = (float(lo), float(hi))
    return out[None] if None in out else out


def evaluate(scorer, users, num_items: int | None = None, cutoffs=DEFAULT_CUTOFFS,
             bootstrap: dict | None = None, batch_size: int = 1000) -> EvalReport:
    """Score held-out users and aggregate Recall/nDCG with bootstrap intervals.

    ``scorer`` maps a (batch x items) binary fold-in matrix to a score matrix
    of the same shape. Fold-in items are excluded from every ranking.
    ``bootstrap`` holds keyword arguments for :func:`bootstrap_ci`; with fewer
    than 10 users the interval collapses to the point estimate.
    """
    users = list(users)
    if not users:
        raise ValueError("no users to evaluate")
    if num_items is None:
        num_items = 1 + max(int(max(u.fold_in.max(), u.held_out.max())) for u in users)
    chunks = []
    for start in range(0, len(users), batch_size):
        part = users[start:start + batch_size]
        rows = np.zeros((len(part), num_items))
        for r, u in enumerate(part):
            rows[r, u.fold_in] = 1.0
        scores = np.asarray(scorer(rows), dtype=np.float64)
        if scores.shape != rows.shape:
            raise ValueError(f"scorer returned shape {scores.shape}, expected {rows.shape}")
        bad = np.flatnonzero(~np.all(np.isfinite(scores), axis=1))
        if bad.size:
            raise ValueError(f"scorer returned non-finite scores for user {part[bad[0]].user_id}")
        chunks.append(per_user_metrics(scores, part, cutoffs))
    per_user = {key: np.concatenate([c[key] for c in chunks]) for key in chunks[0]}
    point = {key: float(v.mean()) for key, v in per_user.items()}
    if len(users) >= 10:
        cis = bootstrap_ci(per_user, **(bootstrap or {}))
    else:
        cis = {key: (p, p) for key, p in point.items()}
    return EvalReport(
        tuple(cutoffs),
        {k: point[("recall", k)] for k in cutoffs},
        {k: point[("ndcg", k)] for k in cutoffs},
        {k: cis[("recall", k)] for k in cutoffs},
        {k: cis[("ndcg", k)] for k in cutoffs},
        len(users),
        per_user,
    )


def significantly_above(a: EvalReport, b: EvalReport, metric: str = "ndcg", k: int = 100) -> bool:
    """True when ``a``'s interval lies strictly above ``b``'s."""
    ca = getattr(a, f"{metric}_ci")[k]
    cb = getattr(b, f"{metric}_ci")[k]
    return ca[0] > cb[1]
