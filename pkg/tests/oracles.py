"""Independent brute-force oracles shared by the test modules."""

import itertools
import math

import numpy as np


def permutation_ot(a, b, c):
    """Exact OT for uniform weights by enumerating Birkhoff vertices.

    Each atom of ``a`` (size m) and ``b`` (size n) is split into L/m and L/n
    copies of mass 1/L with L = lcm(m, n); the optimum is then attained at a
    permutation of the L copies.
    """
    m, n = len(a), len(b)
    assert np.allclose(a, 1 / m) and np.allclose(b, 1 / n)
    L = m * n // math.gcd(m, n)
    assert L <= 8, "enumeration oracle is for tiny instances"
    rows = np.repeat(np.arange(m), L // m)
    cols = np.repeat(np.arange(n), L // n)
    best = np.inf
    for perm in itertools.permutations(range(L)):
        best = min(best, sum(c[rows[k], cols[perm[k]]] for k in range(L)) / L)
    return best


def exact_min_cover(d, eta):
    """Smallest number of sample-centered radius-eta balls covering all points."""
    n = d.shape[0]
    within = d <= eta
    for size in range(1, n + 1):
        for centers in itertools.combinations(range(n), size):
            if within[list(centers)].any(axis=0).all():
                return size
    return n


def naive_recall(order, positives, k):
    return len(set(order[:k]) & set(positives)) / min(k, len(positives))


def naive_ndcg(order, positives, k):
    def dcg(ranking):
        return math.fsum((2 ** (ranking[r - 1] in positives) - 1) / math.log(r + 1)
                         for r in range(1, min(k, len(ranking)) + 1))
    ideal = sorted(positives) + [i for i in order if i not in positives]
    return dcg(list(order)) / dcg(ideal)


def metric_instance(rng):
    """Random (ranking, positives, k) with k sometimes beyond the list length."""
    n = int(rng.integers(2, 60))
    order = [int(i) for i in rng.permutation(n)]
    positives = set(int(i) for i in rng.choice(n, int(rng.integers(1, n + 1)), replace=False))
    return order, positives, int(rng.integers(1, 80))
