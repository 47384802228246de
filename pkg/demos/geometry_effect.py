"""Aligned vs shuffled item geometry on the clustered generator.

A shorter run than the acceptance suite (20 epochs instead of 100), so it
finishes in about two minutes on one core. Pass an epoch count to change it:

    python3 demos/geometry_effect.py 50
"""

import sys

from geocf.baselines import fit_itemknn, score_itemknn, score_popularity
from geocf.data import fold_in_users, split_users
from geocf.evaluation import evaluate
from geocf.geometry import build_cost_from_embeddings
from geocf.loss import LossConfig, TrainConfig, train
from geocf.model import recommend_scores
from geocf.synthetic import clustered_dataset, shuffled_embeddings

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 20
data = clustered_dataset(seed=0)                 # 2000 users, 200 items, 5 clusters
spec = split_users(data.matrix, 0.1, 0.1, seed=0)
train_rows = data.matrix.subset(spec.train)
test = fold_in_users(data.matrix, spec, "test")


def show(name, report):
    lo, hi = report.ndcg_ci[100]
    print(f"{name:<22} nDCG@100 {report.ndcg[100]:.4f}  [{lo:.4f}, {hi:.4f}]")


show("popularity", evaluate(lambda r: score_popularity(train_rows, r), test, 200))
knn = fit_itemknn(train_rows, 50)
show("ItemKNN k=50", evaluate(lambda r: score_itemknn(knn, r), test, 200))

for name, emb in [("GeoCF aligned", data.embeddings),
                  ("GeoCF shuffled", shuffled_embeddings(data.embeddings, seed=0))]:
    result = train(train_rows, build_cost_from_embeddings(emb), LossConfig(epsilon=1.0),
                   TrainConfig(epochs=epochs), seed=0)
    show(name, evaluate(lambda r: recommend_scores(result.params, r), test, 200))
