import math

import numpy as np
import pytest

from geocf.data import FoldInPair
from geocf.evaluation import (RankedList, bootstrap_ci, evaluate, ndcg_at_k, per_user_metrics,
                              rank_items, recall_at_k, significantly_above)
from geocf.numerics import make_rng
from oracles import metric_instance as random_instance, naive_ndcg, naive_recall


def test_recall_hand_example():
    a, b, c = 0, 1, 2
    assert recall_at_k([a, b], {a, c}, 2) == 0.5


def test_recall_perfect():
    assert recall_at_k([3, 1, 0, 2], {1, 3}, 2) == 1.0
    assert recall_at_k([3, 1, 0, 2], {1, 3}, 4) == 1.0


def test_recall_matches_set_oracle():
    rng = make_rng(1)
    for _ in range(50):
        order, pos, k = random_instance(rng)
        assert recall_at_k(order, pos, k) == naive_recall(order, pos, k)


def test_ndcg_examples():
    assert ndcg_at_k([5, 2], {5}, 2) == 1.0
    assert ndcg_at_k([2, 5], {5}, 2) == pytest.approx((1 / math.log(3)) / (1 / math.log(2)), rel=1e-15)
    assert ndcg_at_k([1, 2, 3], {7}, 3) == 0.0


def test_metric_argument_errors():
    with pytest.raises(ValueError):
        recall_at_k([0, 1], set(), 1)
    with pytest.raises(ValueError):
        ndcg_at_k([0, 1], {0}, 0)


def test_metrics_bounded_and_match_fuzz():
    rng = make_rng(2)
    for _ in range(500):
        order, pos, k = random_instance(rng)
        r, n = recall_at_k(order, pos, k), ndcg_at_k(order, pos, k)
        assert r == naive_recall(order, pos, k)
        assert n == naive_ndcg(order, pos, k)
        assert 0 <= r <= 1 and 0 <= n <= 1 + 1e-15


def test_rank_items_masks_and_ties():
    ranked = rank_items([0.5, 0.9, 0.5, 0.9, 0.1], exclude=[1], user_id=7)
    assert isinstance(ranked, RankedList)
    assert ranked.items.tolist() == [3, 0, 2, 4]
    assert ranked.user_id == 7


def _users(n_users, n_items, rng, hist=(3, 12)):
    out = []
    for u in range(n_users):
        h = rng.choice(n_items, int(rng.integers(*hist)), replace=False)
        k = max(1, int(0.8 * h.size))
        out.append(FoldInPair(u, np.sort(h[:k]), np.sort(h[k:])))
    return out


def test_vectorized_matches_scalar():
    rng = make_rng(3)
    users = _users(40, 30, rng)
    scores = np.round(rng.random((40, 30)), 1)  # many ties
    per = per_user_metrics(scores, users, (1, 5, 20, 100))
    for i, u in enumerate(users):
        ranked = rank_items(scores[i], u.fold_in)
        for k in (1, 5, 20, 100):
            assert per[("recall", k)][i] == recall_at_k(ranked, u.held_out, k)
            assert per[("ndcg", k)][i] == pytest.approx(ndcg_at_k(ranked, u.held_out, k), rel=1e-13, abs=0)


def test_oracle_scorer_gives_ones():
    rng = make_rng(4)
    users = _users(30, 50, rng)
    held = np.zeros((30, 50))
    for i, u in enumerate(users):
        held[i, u.held_out] = 1.0
    rep = evaluate(lambda rows: held[:len(rows)], users, 50, batch_size=1000)
    assert all(v == 1.0 for v in rep.recall.values())
    assert all(v == 1.0 for v in rep.ndcg.values())


def test_random_scorer_recall_expectation():
    rng = make_rng(5)
    users = []
    for u in range(1000):
        items = rng.permutation(100)
        users.append(FoldInPair(u, np.array([items[0]]), np.array([items[1]])))
    srng = make_rng(6)
    rep = evaluate(lambda rows: srng.random(rows.shape), users, 100, cutoffs=(20,))
    p = 20 / 99
    se = math.sqrt(p * (1 - p) / 1000)
    assert abs(rep.recall[20] - p) <= 3 * se


def test_monotone_transform_invariance_and_constant_determinism():
    rng = make_rng(7)
    users = _users(25, 40, rng)
    s = rng.standard_normal((25, 40))
    a = evaluate(lambda rows: s, users, 40)
    b = evaluate(lambda rows: np.exp(s), users, 40)
    assert a.recall == b.recall and a.ndcg == b.ndcg
    c1 = evaluate(lambda rows: np.ones_like(rows), users, 40)
    c2 = evaluate(lambda rows: np.ones_like(rows), users, 40)
    assert c1.ndcg == c2.ndcg and c1.ndcg_ci == c2.ndcg_ci


def test_fold_in_items_never_count():
    users = [FoldInPair(0, np.array([0, 1]), np.array([2]))] * 12
    # the scorer loves the fold-in items; they must be skipped
    rep = evaluate(lambda rows: np.tile([10.0, 9.0, 1.0, 0.0], (len(rows), 1)), users, 4, cutoffs=(1,))
    assert rep.recall[1] == 1.0


def test_non_finite_scores_name_user():
    users = [FoldInPair(41, np.array([0]), np.array([1]))]
    with pytest.raises(ValueError, match="41"):
        evaluate(lambda rows: np.full(rows.shape, np.nan), users, 3)


def test_bootstrap_degenerate_and_deterministic():
    assert bootstrap_ci(np.full(50, 0.3)) == (pytest.approx(0.3), pytest.approx(0.3))
    v = make_rng(0).random(200)
    assert bootstrap_ci(v, seed=3) == bootstrap_ci(v, seed=3)
    with pytest.raises(ValueError):
        bootstrap_ci(np.ones(9))


def test_bootstrap_bimodal_brackets_mean_and_shrinks():
    rng = make_rng(9)
    v = np.concatenate([rng.normal(0.1, 0.02, 300), rng.normal(0.8, 0.02, 300)])
    lo, hi = bootstrap_ci(v, fraction=0.2, seed=1)
    lo5, hi5 = bootstrap_ci(v, fraction=0.5, seed=1)
    assert lo <= v.mean() <= hi
    assert hi5 - lo5 < hi - lo


def test_report_ci_contains_point_and_tsv(tmp_path):
    rng = make_rng(10)
    users = _users(60, 40, rng)
    s = rng.random((60, 40))
    rep = evaluate(lambda rows: s, users, 40)
    for k in rep.cutoffs:
        assert rep.ndcg_ci[k][0] <= rep.ndcg[k] <= rep.ndcg_ci[k][1]
        assert 0 <= rep.recall[k] <= 1
    rep.write_tsv(tmp_path / "r.tsv")
    lines = (tmp_path / "r.tsv").read_text().splitlines()
    assert lines[0] == "metric\tcutoff\tvalue\tci_low\tci_high"
    assert len(lines) == 1 + 2 * len(rep.cutoffs)


def test_significance_rule():
    rng = make_rng(11)
    users = _users(100, 40, rng)
    held = np.zeros((100, 40))
    for i, u in enumerate(users):
        held[i, u.held_out] = 1.0
    good = evaluate(lambda rows: held + 0.01 * rng.random(held.shape), users, 40)
    bad = evaluate(lambda rows: rng.random(held.shape), users, 40)
    assert significantly_above(good, bad)
    assert not significantly_above(bad, good)
