import numpy as np
import pytest

from geocf.numerics import finite_diff_grad, softmax_rows
from geocf.ot import (DiscreteMeasure, exact_wasserstein, sinkhorn, sinkhorn_batch_grad,
                      transport_cost)
from oracles import permutation_ot


def line_cost(x, y):
    return np.abs(np.asarray(x, float)[:, None] - np.asarray(y, float)[None, :])


def random_instance(rng, m, n, uniform=False):
    x, y = rng.random((m, 2)), rng.random((n, 2))
    if uniform:
        a, b = np.full(m, 1 / m), np.full(n, 1 / n)
    else:
        a, b = rng.random(m) + 0.1, rng.random(n) + 0.1
        a, b = a / a.sum(), b / b.sum()
    return a, b, np.linalg.norm(x[:, None] - y[None], axis=2)


# exact solver

def test_exact_two_diracs():
    assert exact_wasserstein([1.0], [1.0], line_cost([0], [1])) == 1.0


def test_exact_identity_is_zero(rng):
    a, _, _ = random_instance(rng, 5, 5)
    x = rng.random((5, 2))
    c = np.linalg.norm(x[:, None] - x[None], axis=2)
    assert exact_wasserstein(a, a, c) == pytest.approx(0.0, abs=1e-12)


def test_exact_two_by_two_vertex_enumeration():
    c = line_cost([0, 2], [1, 3])
    # the two vertices of the 2x2 Birkhoff polytope
    vertices = [(c[0, 0] + c[1, 1]) / 2, (c[0, 1] + c[1, 0]) / 2]
    assert min(vertices) == 1.0
    assert exact_wasserstein([0.5, 0.5], [0.5, 0.5], c) == pytest.approx(min(vertices), abs=1e-12)


@pytest.mark.parametrize("m,n", [(2, 2), (3, 3), (4, 4), (2, 4), (2, 3), (3, 6), (4, 8), (1, 5)])
def test_exact_matches_enumeration(rng, m, n):
    for _ in range(3):
        a, b, c = random_instance(rng, m, n, uniform=True)
        assert exact_wasserstein(a, b, c) == pytest.approx(permutation_ot(a, b, c), abs=1e-9)


def test_exact_rejects_oversize():
    a = np.full(65, 1 / 65)
    with pytest.raises(ValueError, match="sinkhorn"):
        exact_wasserstein(a, a, np.zeros((65, 65)))


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure([0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteMeasure([1.5, -0.5])
    assert len(DiscreteMeasure.uniform([3, 4, 5])) == 3


# sinkhorn

@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_sinkhorn_single_atom(eps):
    res = sinkhorn([1.0], [1.0], [[0.0]], eps)
    assert res.value == 0.0


def test_sinkhorn_three_point_close_to_exact():
    c = line_cost([0.0, 1.0, 2.0], [0.5, 1.7, 3.1])
    u = np.full(3, 1 / 3)
    exact = exact_wasserstein(u, u, c)
    res = sinkhorn(u, u, c, 0.01)
    assert abs(res.value - exact) <= 0.02 * exact


def test_sinkhorn_entropy_lower_bound(rng):
    for _ in range(20):
        m, n = rng.integers(2, 8, size=2)
        a, b, c = random_instance(rng, m, n)
        res = sinkhorn(a, b, c, 1.0)
        assert res.converged
        assert res.value >= exact_wasserstein(a, b, c) - 1.0 * np.log(m * n) - 1e-9


def test_sinkhorn_value_is_cost_plus_entropy(rng):
    a, b, c = random_instance(rng, 4, 6)
    res = sinkhorn(a, b, c, 0.3, marginal_tol=1e-12)
    p = res.plan
    assert res.value == pytest.approx(transport_cost(p, c) + 0.3 * np.sum(p * np.log(p)), abs=1e-9)


def test_sinkhorn_dual_trace_nondecreasing(rng):
    for eps in (1.0, 0.1, 0.01):
        for _ in range(10):
            a, b, c = random_instance(rng, 6, 5)
            res = sinkhorn(a, b, c, eps, marginal_tol=1e-10, eps_scaling=False)
            assert np.all(np.diff(res.trace) >= -1e-12)


def test_sinkhorn_marginals_when_converged(rng):
    tol = 1e-6
    for _ in range(100):
        a, b, c = random_instance(rng, 10, 10)
        res = sinkhorn(a, b, c, 0.1, max_iter=2000, marginal_tol=tol)
        assert res.converged
        assert np.all(res.plan >= 0)
        assert np.max(np.abs(res.plan.sum(1) - a)) <= tol
        assert np.max(np.abs(res.plan.sum(0) - b)) <= tol


def test_sinkhorn_transpose_symmetry(rng):
    for _ in range(10):
        a, b, c = random_instance(rng, 5, 7)
        v1 = sinkhorn(a, b, c, 0.1, max_iter=5000, marginal_tol=1e-13).value
        v2 = sinkhorn(b, a, c.T, 0.1, max_iter=5000, marginal_tol=1e-13).value
        assert abs(v1 - v2) <= 1e-9


def test_sinkhorn_error_shrinks_with_epsilon(rng):
    for _ in range(5):
        a, b, c = random_instance(rng, 4, 5)
        exact = exact_wasserstein(a, b, c)
        errs = [abs(sinkhorn(a, b, c, e, max_iter=20000, marginal_tol=1e-9).value - exact)
                for e in (1.0, 0.1, 0.01, 0.001)]
        assert all(x > y for x, y in zip(errs, errs[1:])), errs


def test_sinkhorn_zero_weight_atoms(rng):
    a = np.array([0.5, 0.0, 0.5])
    b = np.array([0.25, 0.75])
    c = rng.random((3, 2))
    res = sinkhorn(a, b, c, 0.1)
    assert np.all(res.plan[1] == 0)
    dense = sinkhorn(a[[0, 2]], b, c[[0, 2]], 0.1)
    assert res.value == pytest.approx(dense.value, abs=1e-12)


def test_sinkhorn_input_errors():
    with pytest.raises(ValueError):
        sinkhorn([1.0], [1.0], [[0.0]], 0.0)
    with pytest.raises(ValueError):
        sinkhorn([1.0], [1.0], [[np.inf]], 0.1)


# batched unrolled gradient

def _four_item_case(rng):
    x = rng.random((4, 2))
    c = np.linalg.norm(x[:, None] - x[None], axis=2)
    a = np.array([[0.5, 0.0, 0.5, 0.0], [0.25, 0.25, 0.25, 0.25]])
    b = softmax_rows(rng.normal(size=(2, 4)))
    return a, b, c


def _tangent(v):
    return v - v.mean(axis=-1, keepdims=True)


@pytest.mark.parametrize("eps", [1.0, 0.1])
def test_batch_grad_matches_finite_differences(rng, eps):
    a, b, c = _four_item_case(rng)
    _, grad = sinkhorn_batch_grad(a, b, c, eps, n_unroll=20)
    for k in range(2):
        fd = finite_diff_grad(lambda v: sinkhorn_batch_grad(a[k:k + 1], v[None], c, eps, 20)[0][0], b[k])
        g_t, fd_t = _tangent(grad[k]), _tangent(fd)
        assert np.max(np.abs(g_t - fd_t)) <= 1e-4 * np.max(np.abs(fd_t))


def test_batch_rows_are_independent(rng):
    a, b, c = _four_item_case(rng)
    v2, g2 = sinkhorn_batch_grad(np.repeat(a[:1], 2, 0), np.repeat(b[:1], 2, 0), c, 1.0, 10)
    assert v2[0] == v2[1] and np.array_equal(g2[0], g2[1])
    v1, g1 = sinkhorn_batch_grad(a[:1], b[:1], c, 1.0, 10)
    assert np.allclose(v1[0], v2[0], rtol=0, atol=1e-13)
    assert np.allclose(g1[0], g2[0], rtol=0, atol=1e-12)


def test_batch_value_matches_solver(rng):
    a, b, c = _four_item_case(rng)
    vals, _ = sinkhorn_batch_grad(a, b, c, 0.5, n_unroll=500)
    for k in range(2):
        ref = sinkhorn(a[k], b[k], c, 0.5, max_iter=5000, marginal_tol=1e-13).value
        assert vals[k] == pytest.approx(ref, abs=1e-9)


def test_batch_grad_converges_to_dual_potential(rng):
    for _ in range(5):
        x = rng.random((3, 2))
        c = np.linalg.norm(x[:, None] - x[None], axis=2)
        a = softmax_rows(rng.normal(size=(1, 3)))
        b = softmax_rows(rng.normal(size=(1, 3)))
        _, grad = sinkhorn_batch_grad(a, b, c, 0.5, n_unroll=2000)
        res = sinkhorn(a[0], b[0], c, 0.5, max_iter=20000, marginal_tol=1e-14)
        # dS/db equals the column potential up to an additive constant
        assert np.max(np.abs(_tangent(grad[0]) - _tangent(res.g))) <= 1e-6


def test_batch_self_cost_and_antisymmetric_perturbation(rng):
    x = rng.random((4, 2))
    c = np.linalg.norm(x[:, None] - x[None], axis=2)
    a = softmax_rows(rng.normal(size=(1, 4)))
    vals, grad = sinkhorn_batch_grad(a, a, c, 1.0, n_unroll=200)
    self_cost = sinkhorn(a[0], a[0], c, 1.0, max_iter=5000, marginal_tol=1e-13).value
    assert vals[0] == pytest.approx(self_cost, abs=1e-9)
    delta = 1e-6 * np.array([[1.0, -1.0, 0.5, -0.5]])
    up = sinkhorn_batch_grad(a, a + delta, c, 1.0, 200)[0][0] - vals[0]
    down = sinkhorn_batch_grad(a, a - delta, c, 1.0, 200)[0][0] - vals[0]
    # first-order change is odd in the perturbation; the remainder is O(|delta|^2)
    assert abs(up + down) <= 1e-3 * abs(up)
    assert up == pytest.approx(float(grad[0] @ delta[0]), rel=1e-3)


def test_batch_plans_have_target_marginals(rng):
    a, b, c = _four_item_case(rng)
    _, _, plans = sinkhorn_batch_grad(a, b, c, 1.0, 300, return_plans=True)
    assert np.allclose(plans.sum(2), a, atol=1e-10)
    assert np.allclose(plans.sum(1), b, atol=1e-12)


def test_batch_errors(rng):
    a, b, c = _four_item_case(rng)
    with pytest.raises(ValueError):
        sinkhorn_batch_grad(a, b, c, 1.0, n_unroll=0)
    bad = b.copy()
    bad[0, 0] = 0.0
    with pytest.raises(ValueError):
        sinkhorn_batch_grad(a, bad, c, 1.0)
    with pytest.raises(ValueError):
        sinkhorn_batch_grad(a, b, c * 1e4, 1e-2)
