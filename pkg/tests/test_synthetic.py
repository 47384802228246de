import numpy as np
import pytest

from geocf.synthetic import clustered_dataset, grid_users, manifold_users, shuffled_embeddings


def test_clustered_shapes_and_determinism():
    a = clustered_dataset(n_users=100, n_items=40, seed=3)
    b = clustered_dataset(n_users=100, n_items=40, seed=3)
    assert a.matrix.num_users == 100 and a.matrix.num_items == 40
    assert a.matrix.pairs() == b.matrix.pairs()
    assert np.array_equal(a.embeddings, b.embeddings)
    assert a.matrix.pairs() != clustered_dataset(n_users=100, n_items=40, seed=4).matrix.pairs()


def test_clustered_click_counts_and_cluster_purity():
    d = clustered_dataset(n_users=300, n_items=100, seed=0)
    counts = d.matrix.counts()
    assert counts.min() >= 1 and counts.max() <= 20
    same = [np.mean(d.item_cluster[d.matrix.history(u)] == d.user_cluster[u]) for u in range(300)]
    # 5% noise clicks spread over all clusters
    assert np.mean(same) > 0.9


def test_clusters_separated_in_embedding_space():
    d = clustered_dataset(n_users=10, n_items=100, seed=1)
    centroids = np.stack([d.embeddings[d.item_cluster == c].mean(0) for c in range(5)])
    within = max(np.linalg.norm(d.embeddings[i] - centroids[d.item_cluster[i]]) for i in range(100))
    between = min(np.linalg.norm(centroids[a] - centroids[b]) for a in range(5) for b in range(a))
    assert between > 2 * within


def test_popularity_weight_keeps_other_draws():
    flat = clustered_dataset(n_users=50, n_items=40, seed=2)
    skew = clustered_dataset(n_users=50, n_items=40, seed=2, popularity_weight=1.0)
    assert np.array_equal(flat.embeddings, skew.embeddings)
    assert np.array_equal(flat.user_cluster, skew.user_cluster)


def test_shuffled_embeddings_is_permutation():
    e = np.arange(12.0).reshape(6, 2)
    s = shuffled_embeddings(e, seed=1)
    assert sorted(map(tuple, s)) == sorted(map(tuple, e))
    assert not np.array_equal(s, e)
    assert np.array_equal(s, shuffled_embeddings(e, seed=1))


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_manifold_centers_span_dim(dim):
    s = manifold_users(dim, n_users=50, seed=0)
    assert np.all(s.centers[:, dim:] == 0.5)
    assert len(s.clouds) == 50 and all(c.size == 4 for c in s.clouds)
    with pytest.raises(ValueError):
        manifold_users(4)


def test_manifold_clouds_are_nearest_items():
    s = manifold_users(2, n_users=5, n_items=30, seed=1)
    for center, cloud in zip(s.centers, s.clouds):
        d = np.linalg.norm(s.embeddings - center, axis=1)
        assert d[cloud].max() <= np.delete(d, cloud).min()


def test_grid_users_layout():
    s = grid_users(side=5, n_users=10)
    assert s.embeddings.shape == (25, 2)
    assert s.embeddings.min() == 0.0 and s.embeddings.max() == 1.0
    assert all(c.size == 4 for c in s.clouds)
