"""Ratings ingestion and the held-out-user split protocol.

Pipeline: :func:`load_ratings` keeps ratings >= threshold as positive clicks,
:func:`filter_users` drops users with too few clicks, :func:`split_users`
partitions users into train / validation / test, and :func:`fold_in` splits
one held-out user's history into model input and evaluation targets.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .io import read_container, write_container
from .numerics import make_rng

RATINGS_HEADER = ("userId", "itemId", "rating", "timestamp")


@dataclass(frozen=True)
class InteractionMatrix:
    """Binary users x items clicks in CSR form plus the original ids.

    Row ``u`` holds the sorted item indices clicked by ``user_ids[u]``.
    """

    user_ids: np.ndarray
    item_ids: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        if self.indptr.size != self.user_ids.size + 1:
            raise ValueError("indptr length must be number of users + 1")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.item_ids.size):
            raise ValueError("item index out of range")

    @classmethod
    def from_rows(cls, rows, user_ids=None, item_ids=None) -> "InteractionMatrix":
        """Build from a list of item-index iterables, one per user."""
        rows = [np.unique(np.asarray(r, dtype=np.int64)) for r in rows]
        n_items = None if item_ids is None else len(item_ids)
        if n_items is None:
            n_items = 1 + max((int(r.max()) for r in rows if r.size), default=-1)
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([r.size for r in rows])
        indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        uids = np.arange(len(rows)) if user_ids is None else np.asarray(user_ids)
        iids = np.arange(n_items) if item_ids is None else np.asarray(item_ids)
        return cls(uids.astype(np.int64), iids.astype(np.int64), indptr, indices.astype(np.int64))

    @classmethod
    def from_dense(cls, dense, user_ids=None, item_ids=None) -> "InteractionMatrix":
        dense = np.asarray(dense)
        if item_ids is None:
            item_ids = np.arange(dense.shape[1])
        return cls.from_rows([np.flatnonzero(r) for r in dense], user_ids, item_ids)

    @property
    def num_users(self) -> int:
        return self.user_ids.size

    @property
    def num_items(self) -> int:
        return self.item_ids.size

    def row(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def user_index(self, user_id) -> int:
        hits = np.flatnonzero(self.user_ids == user_id)
        if hits.size == 0:
            raise KeyError(f"unknown user id {user_id}")
        return int(hits[0])

    def history(self, user_id) -> np.ndarray:
        return self.row(self.user_index(user_id))

    def counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    def item_counts(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.num_items)

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.num_users, self.num_items))

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def pairs(self) -> list:
        return [(int(self.user_ids[u]), int(self.item_ids[i]))
                for u in range(self.num_users) for i in self.row(u)]

    def subset(self, user_ids) -> "InteractionMatrix":
        """Users restricted to ``user_ids`` (in that order); items unchanged."""
        idx = [self.user_index(u) for u in user_ids]
        return InteractionMatrix.from_rows([self.row(u) for u in idx],
                                           self.user_ids[idx] if idx else np.zeros(0, np.int64),
                                           self.item_ids)

    def save(self, path) -> None:
        write_container(path, {"kind": "interaction_matrix"},
                        {"user_ids": self.user_ids, "item_ids": self.item_ids,
                         "indptr": self.indptr, "indices": self.indices})

    @classmethod
    def load(cls, path) -> "InteractionMatrix":
        meta, arrs = read_container(path)
        if meta.get("kind") != "interaction_matrix":
            raise ValueError(f"{path}: not an interaction matrix")
        return cls(arrs["user_ids"], arrs["item_ids"], arrs["indptr"], arrs["indices"])


@dataclass(frozen=True)
class SplitSpec:
    train: tuple
    validation: tuple
    test: tuple
    seed: int
    val_fraction: float
    test_fraction: float
    fold_in_fraction: float = 0.8

    def __post_init__(self):
        a, b, c = set(self.train), set(self.validation), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError("split user sets overlap")
        if not 0 < self.fold_in_fraction < 1:
            raise ValueError("fold_in_fraction must lie in (0, 1)")

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "val_fraction": self.val_fraction,
            "test_fraction": self.test_fraction,
            "fold_in_fraction": self.fold_in_fraction,
            "train": [int(u) for u in self.train],
            "validation": [int(u) for u in self.validation],
            "test": [int(u) for u in self.test],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "SplitSpec":
        with open(path) as fh:
            d = json.load(fh)
        return cls(tuple(d["train"]), tuple(d["validation"]), tuple(d["test"]), d["seed"],
                   d["val_fraction"], d["test_fraction"], d["fold_in_fraction"])


@dataclass(frozen=True)
class FoldInPair:
    user_id: int
    fold_in: np.ndarray
    held_out: np.ndarray


def _parse_row(row, lineno, path):
    try:
        return int(row[0]), int(row[1]), float(row[2])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc


def load_ratings(path, rating_threshold: float = 4.0, headerless_tsv: bool = False) -> np.ndarray:
    """Positive (user, item) pairs from a ratings file.

    Rows with ``rating >= rating_threshold`` are kept and duplicate pairs
    collapse to one, in order of first appearance. The default format is CSV
    with header ``userId,itemId,rating,timestamp``; ``headerless_tsv`` reads
    tab-separated ``user item rating [timestamp]`` lines instead.

    Returns an (n, 2) int64 array.
    """
    seen = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t" if headerless_tsv else ",")
        start = 1
        if not headerless_tsv:
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != RATINGS_HEADER:
                raise ValueError(f"{path}: expected header {','.join(RATINGS_HEADER)}, got {header!r}")
            start = 2
        for lineno, row in enumerate(reader, start=start):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) not in (3, 4):
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}")
            u, i, r = _parse_row(row, lineno, path)
            if not math.isfinite(r):
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}")
            if r >= rating_threshold:
                seen.setdefault((u, i), None)
    return np.array(list(seen), dtype=np.int64).reshape(-1, 2)


def filter_users(pairs, min_user_interactions: int = 5) -> InteractionMatrix:
    """Keep users with at least ``min_user_interactions`` clicks.

    Items are not filtered by count, so one pass already reaches the fixpoint;
    the loop only confirms it. Users and items are reindexed in sorted id
    order, keeping only items clicked by a retained user.
    """
    pairs = np.unique(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=0)
    if pairs.size == 0:
        raise ValueError("no interactions to filter")
    while True:
        users, counts = np.unique(pairs[:, 0], return_counts=True)
        keep = users[counts >= min_user_interactions]
        if keep.size == users.size:
            break
        pairs = pairs[np.isin(pairs[:, 0], keep)]
    if pairs.size == 0:
        raise ValueError(f"no user has >= {min_user_interactions} interactions")
    user_ids = np.unique(pairs[:, 0])
    item_ids = np.unique(pairs[:, 1])
    u_idx = np.searchsorted(user_ids, pairs[:, 0])
    i_idx = np.searchsorted(item_ids, pairs[:, 1])
    rows = [[] for _ in range(user_ids.size)]
    for u, i in zip(u_idx, i_idx):
        rows[u].append(i)
    return InteractionMatrix.from_rows(rows, user_ids, item_ids)


def _share(n: int, frac: float) -> int:
    return int(math.floor(n * frac + 0.5))


def split_users(matrix: InteractionMatrix, val_fraction: float = 0.1, test_fraction: float = 0.1,
                seed: int = 0, fold_in_fraction: float = 0.8) -> SplitSpec:
    """Seeded shuffle of users, cut into contiguous train/validation/test slices."""
    if val_fraction <= 0 or test_fraction <= 0 or val_fraction + test_fraction >= 1:
        raise ValueError("fractions must be positive with sum < 1")
    n = matrix.num_users
    n_val, n_test = _share(n, val_fraction), _share(n, test_fraction)
    n_train = n - n_val - n_test
    if min(n_val, n_test, n_train) < 1:
        raise ValueError(f"{n} users too few for nonempty train/validation/test splits")
    perm = matrix.user_ids[make_rng(seed).permutation(n)]
    return SplitSpec(
        tuple(int(u) for u in sorted(perm[:n_train])),
        tuple(int(u) for u in sorted(perm[n_train:n_train + n_val])),
        tuple(int(u) for u in sorted(perm[n_train + n_val:])),
        seed, val_fraction, test_fraction, fold_in_fraction,
    )


def fold_in_size(history: int, fraction: float = 0.8) -> int:
    if history < 2:
        raise ValueError(f"history of {history} item(s) cannot be split")
    k = math.ceil(fraction * history - 1e-9)
    if k >= history:
        k = math.floor(fraction * history + 1e-9)
    return max(k, 1)


def fold_in(matrix: InteractionMatrix, spec: SplitSpec, user_id, rng: np.random.Generator) -> FoldInPair:
    """Random ``fold_in_fraction`` of a held-out user's history as input, rest as targets."""
    if user_id not in spec.validation and user_id not in spec.test:
        raise ValueError(f"user {user_id} is not in the validation or test split")
    hist = matrix.history(user_id)
    k = fold_in_size(hist.size, spec.fold_in_fraction)
    chosen = np.sort(rng.choice(hist, size=k, replace=False))
    return FoldInPair(int(user_id), chosen, np.setdiff1d(hist, chosen))


def fold_in_users(matrix: InteractionMatrix, spec: SplitSpec, which: str = "test") -> list:
    """Fold-in pairs for every user of a held-out split, seeded from the split seed."""
    users = {"validation": spec.validation, "test": spec.test}[which]
    rng = make_rng(spec.seed + (1 if which == "validation" else 2))
    return [fold_in(matrix, spec, u, rng) for u in users]
