"""Entropic transport vs the exact optimum on a small random instance.

Run: python3 demos/ot_basics.py
"""

import numpy as np

from geocf.ot import exact_wasserstein, sinkhorn, transport_cost

rng = np.random.default_rng(0)
x, y = rng.random((6, 2)), rng.random((8, 2))
c = np.linalg.norm(x[:, None] - y[None], axis=2)  # euclidean ground cost
a = np.full(6, 1 / 6)
b = rng.random(8)
b /= b.sum()

exact = exact_wasserstein(a, b, c)
print(f"exact cost            {exact:.6f}")
print("epsilon   value       <P,C>      iterations")
for eps in (1.0, 0.1, 0.01, 0.001):
    r = sinkhorn(a, b, c, eps)
    print(f"{eps:<8}  {r.value:.6f}   {transport_cost(r.plan, c):.6f}   {r.iterations_run}")

# the plan's marginals are the two input measures
r = sinkhorn(a, b, c, 0.01, max_iter=20000, marginal_tol=1e-10)
print("converged", r.converged, "after", r.iterations_run, "iterations")
print("row marginal error", np.abs(r.plan.sum(1) - a).max())
print("col marginal error", np.abs(r.plan.sum(0) - b).max())
