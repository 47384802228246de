"""Covering-number dimension estimates on users with known structure.

Run: python3 demos/dimension.py   (about a minute)
"""

import numpy as np

from geocf.geometry import build_cost_from_embeddings, dimension_profile
from geocf.synthetic import grid_users, manifold_users

samples = [("1-D manifold", manifold_users(1, seed=0)),
           ("2-D grid", grid_users(seed=0)),
           ("3-D cube", manifold_users(3, seed=0))]
for name, s in samples:
    dd = dimension_profile(s.clouds, build_cost_from_embeddings(s.embeddings))
    print(f"{name:<14} d* = {dd.d_star_estimate:.2f}")
    print("   eta      ", " ".join(f"{e:6.3f}" for e in dd.eta_grid))
    print("   N(eta)   ", " ".join(f"{n:6d}" for n in dd.covering_numbers))

# flattening the item embeddings to their top principal direction can only
# lower the estimate when the grid and scale are shared
s = manifold_users(3, n_users=150, seed=0)
centered = s.embeddings - s.embeddings.mean(0)
_, _, vt = np.linalg.svd(centered, full_matrices=False)
flat = s.embeddings.mean(0) + np.outer(centered @ vt[0], vt[0])
full = dimension_profile(s.clouds, build_cost_from_embeddings(s.embeddings))
col = dimension_profile(s.clouds, build_cost_from_embeddings(flat), eta_grid=full.eta_grid, scale=full.scale)
print(f"3-D embeddings d* = {full.d_star_estimate:.2f}, rank-1 collapse d* = {col.d_star_estimate:.2f}")
