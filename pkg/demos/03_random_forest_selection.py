"""
Embedded selection with a random forest
=======================================

Impurity importances from a forest of regression trees rank the features;
a cross-validated sweep over the top-k features then decides how many to
keep. The data has two informative columns hidden among eight noise columns.
"""
import numpy as np

from coresel.forest import fit_forest, select_top_k

rng = np.random.default_rng(0)
X = rng.standard_normal((500, 10))
y = 3 * X[:, 0] - 2 * X[:, 1] + 0.1 * rng.standard_normal(500)

###############################################################################
# 100 trees, each grown on a bootstrap sample with sqrt(d) candidate features
# per split. The first call compiles the split search, later calls are fast.

forest = fit_forest(X, y, n_trees=100, seed=0)
for name, imp in sorted(zip(forest.feature_names, forest.importance), key=lambda t: -t[1])[:4]:
    print(f"{name:4s} {imp:10.2f}")

###############################################################################
# The prediction of the forest is the plain mean of its trees.

Z = rng.standard_normal((5, 10))
print(np.allclose(forest.predict(Z), forest.predict_trees(Z).mean(axis=0)))

###############################################################################
# CV error against the number of retained features. The smallest k within 5%
# of the best error wins.

top = select_top_k(X, forest.importance, range(1, 11), cv_folds=5, seed=0, n_trees=30, y=y)
for k, err in top.curve():
    print(f"k={k:2d}  cv mse {err:.4f}")
print("keep", top.best_k, "features:", top.features)
