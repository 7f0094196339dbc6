"""Random-forest regression from scratch, with mean-decrease-impurity importances.

Trees are CART regressors grown on bootstrap samples. At every node a random
subset of candidate features is drawn and the (feature, threshold) pair with
the largest residual-sum-of-squares decrease is chosen; thresholds are
midpoints between consecutive distinct values. Ties go to the lowest feature
index, then the lowest threshold.

Feature importance of ``x_j`` is the RSS decrease summed over all splits on
``x_j`` in a tree, averaged over the ``N`` trees. Because the decrease is in
RSS (not MSE) units, every split is implicitly weighted by its node's sample
count.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .trace import DataError, FeatureMatrix, kfold_indices

FORMAT = "coresel-forest/1"


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_leaf: int = 2
    features_per_split: int | None = None  # None -> ceil(sqrt(d))

    def __post_init__(self):
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def mtry(self, d: int) -> int:
        k = math.ceil(math.sqrt(d)) if self.features_per_split is None else self.features_per_split
        if not 1 <= k <= d:
            raise ValueError(f"features_per_split={k} outside [1, {d}]")
        return k


@njit(cache=True)
def _grow(X, y, rows, max_depth, min_leaf, mtry, keys):
    n = rows.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    n_node = np.zeros(cap, dtype=np.int64)
    importance = np.zeros(d)

    buf = rows.copy()
    tmp = np.empty(n, dtype=np.int64)
    stack = np.empty((cap, 4), dtype=np.int64)  # node, start, end, depth
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    count = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start
        ymin = np.inf
        ymax = -np.inf
        total = 0.0
        for i in range(start, end):
            v = y[buf[i]]
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        mean = total / m
        if ymin == ymax:
            mean = ymin  # exact value for pure nodes, free of summation rounding
        value[node] = mean
        n_node[node] = m
        if ymin == ymax or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        sse = 0.0
        for i in range(start, end):
            r = y[buf[i]] - mean
            sse += r * r

        cand = np.sort(np.argsort(keys[node])[:mtry])
        best_gain = 0.0
        best_f = -1
        best_t = 0.0
        tol = 1e-12 * sse
        xs = np.empty(m)
        ys = np.empty(m)
        for f in cand:
            for i in range(m):
                xs[i] = X[buf[start + i], f]
            order = np.argsort(xs, kind="mergesort")
            xs_sorted = xs[order]
            tot = 0.0
            for i in range(m):
                ys[i] = y[buf[start + order[i]]] - mean
                tot += ys[i]
            base = tot * tot / m
            sl = 0.0
            for i in range(m - min_leaf):
                sl += ys[i]
                nl = i + 1
                if nl < min_leaf or xs_sorted[i] == xs_sorted[i + 1]:
                    continue
                nr = m - nl
                sr = tot - sl
                gain = sl * sl / nl + sr * sr / nr - base
                if gain > best_gain + tol:
                    best_gain = gain
                    best_f = f
                    t = 0.5 * (xs_sorted[i] + xs_sorted[i + 1])
                    if t >= xs_sorted[i + 1]:
                        t = xs_sorted[i]
                    best_t = t
        if best_f < 0:
            continue

        nl = 0
        nr = 0
        for i in range(start, end):
            r = buf[i]
            if X[r, best_f] <= best_t:
                buf[start + nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for i in range(nr):
            buf[start + nl + i] = tmp[i]

        feature[node] = best_f
        threshold[node] = best_t
        importance[best_f] += best_gain
        li = count
        ri = count + 1
        count += 2
        left[node] = li
        right[node] = ri
        # right child pushed first so the left subtree is expanded first
        stack[top, 0] = ri
        stack[top, 1] = start + nl
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = li
        stack[top, 1] = start
        stack[top, 2] = start + nl
        stack[top, 3] = depth + 1
        top += 1
    return (feature[:count], threshold[:count], left[:count], right[:count],
            value[:count], n_node[:count], importance)


@dataclass(frozen=True)
class RegressionTree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    importance: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            r, n, ff = rows[internal], node[internal], f[internal]
            go_left = X[r, ff] <= self.threshold[n]
            node[internal] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        ints = {"feature", "left", "right", "n_samples"}
        return cls(**{k: np.asarray(d[k], dtype=np.int64 if k in ints else float)
                      for k in ("feature", "threshold", "left", "right", "value",
                                "n_samples", "importance")})


def _xy(dataset, y=None):
    if isinstance(dataset, FeatureMatrix):
        return dataset.X, dataset.y, dataset.feature_names
    X = np.asarray(dataset, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = tuple(f"x{j}" for j in range(X.shape[1]))
    return X, np.asarray(y, dtype=float), names


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def bootstrap_indices(n: int, seed) -> np.ndarray:
    if n < 1:
        raise DataError("cannot bootstrap an empty dataset")
    return _rng(seed).integers(0, n, size=n)


def bootstrap_sample(dataset: FeatureMatrix, seed) -> FeatureMatrix:
    """n rows drawn uniformly with replacement."""
    return dataset.take(bootstrap_indices(dataset.n_rows, seed))


def fit_tree(X, y, params: TreeParams = TreeParams(), seed=None, rows=None) -> RegressionTree:
    """Grow one regression tree on ``X[rows]`` (all rows by default)."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    y = np.ascontiguousarray(np.asarray(y, dtype=float))
    n, d = X.shape
    rows = np.arange(n, dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise DataError("cannot fit a tree on zero rows")
    keys = _rng(seed).random((2 * rows.size + 1, d))
    depth = -1 if params.max_depth is None else params.max_depth
    return RegressionTree(*_grow(X, y, rows, depth, params.min_samples_leaf, params.mtry(d), keys))


@dataclass
class ForestModel:
    trees: list
    importance: np.ndarray
    feature_names: tuple
    seed: int | None
    params: TreeParams = field(default_factory=TreeParams)
    oob_rows: list = field(default_factory=list, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict_trees(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.array([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        return self.predict_trees(X).mean(axis=0)

    def ranking(self) -> list[str]:
        """Feature names by decreasing importance (ties: lower column index first)."""
        order = np.lexsort((np.arange(self.n_features), -self.importance))
        return [self.feature_names[i] for i in order]

    def oob_mse(self, X, y) -> float:
        """Out-of-bag MSE (diagnostic only; selection uses CV error)."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        total = np.zeros(len(y))
        count = np.zeros(len(y))
        for tree, oob in zip(self.trees, self.oob_rows):
            if len(oob):
                total[oob] += tree.predict(X[oob])
                count[oob] += 1
        seen = count > 0
        if not seen.any():
            return float("nan")
        return float(np.mean((total[seen] / count[seen] - y[seen]) ** 2))

    def to_json(self) -> str:
        doc = {
            "format": FORMAT,
            "feature_names": list(self.feature_names),
            "n_trees": self.n_trees,
            "seed": self.seed,
            "params": asdict(self.params),
            "importance": self.importance.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        doc = json.loads(text)
        if doc.get("format") != FORMAT:
            raise DataError(f"not a {FORMAT} document")
        return cls([RegressionTree.from_dict(t) for t in doc["trees"]],
                   np.asarray(doc["importance"], dtype=float),
                   tuple(doc["feature_names"]), doc["seed"], TreeParams(**doc["params"]))


def fit_forest(dataset, y=None, n_trees: int = 100, params: TreeParams = TreeParams(),
               seed: int | None = 0) -> ForestModel:
    """Fit ``n_trees`` trees, each on its own bootstrap sample.

    ``dataset`` is a :class:`FeatureMatrix` with a target, or an ``X`` array
    with ``y`` given separately. Per-tree seeds are spawned from ``seed`` so
    the model is fully determined by (data, params, seed).
    """
    X, y, names = _xy(dataset, y)
    n = X.shape[0]
    if n < 1:
        raise DataError("cannot fit a forest on an empty dataset")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = np.ascontiguousarray(X)
    y = np.ascontiguousarray(y)
    trees, oob = [], []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        rows = bootstrap_indices(n, rng)
        trees.append(fit_tree(X, y, params, rng, rows))
        mask = np.ones(n, dtype=bool)
        mask[rows] = False
        oob.append(np.flatnonzero(mask))
    importance = np.mean([t.importance for t in trees], axis=0)
    return ForestModel(trees, importance, tuple(names), seed, params, oob)


def predict(forest: ForestModel, row) -> float:
    """Forest prediction for a single row of ``d`` values."""
    row = np.asarray(row, dtype=float).ravel()
    if row.shape[0] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} features, got {row.shape[0]}")
    return float(forest.predict(row[None, :])[0])


def forest_cv_error(X, y, n_trees: int, params: TreeParams, folds: int, seed) -> float:
    """K-fold CV mean squared error of a forest (mean over folds)."""
    errors = []
    for i, test in enumerate(kfold_indices(len(y), folds, seed)):
        train = np.setdiff1d(np.arange(len(y)), test)
        model = fit_forest(X[train], y[train], n_trees, params, seed=(seed, i))
        errors.append(np.mean((model.predict(X[test]) - y[test]) ** 2))
    return float(np.mean(errors))


@dataclass(frozen=True)
class TopKResult:
    best_k: int
    features: tuple[str, ...]
    cv_errors: dict  # k -> CV error

    def curve(self) -> list[tuple[int, float]]:
        return sorted(self.cv_errors.items())


def select_top_k(dataset, importance, k_grid, cv_folds: int = 5, seed: int = 0,
                 n_trees: int = 100, params: TreeParams = TreeParams(),
                 tolerance: float = 0.05, y=None, feature_names=None) -> TopKResult:
    """CV error of forests retrained on the top-k features, for each k in ``k_grid``.

    Returns the smallest k whose CV error is within ``tolerance`` (relative)
    of the best error on the grid. The same folds are used for every k.
    """
    X, y, names = _xy(dataset, y)
    if feature_names is not None:
        names = tuple(feature_names)
    d = X.shape[1]
    importance = np.asarray(importance, dtype=float)
    if importance.shape != (d,):
        raise ValueError(f"importance has {importance.shape} entries for {d} features")
    k_grid = sorted(set(int(k) for k in k_grid))
    if not k_grid:
        raise ValueError("k_grid is empty")
    if k_grid[0] < 1 or k_grid[-1] > d:
        raise ValueError(f"every k must lie in [1, {d}]")
    order = np.lexsort((np.arange(d), -importance))
    errors = {}
    for k in k_grid:
        cols = np.sort(order[:k])
        p = params
        if params.features_per_split is not None and params.features_per_split > k:
            p = TreeParams(params.max_depth, params.min_samples_leaf, k)
        errors[k] = forest_cv_error(X[:, cols], y, n_trees, p, cv_folds, seed)
    best = min(errors.values())
    best_k = next(k for k in k_grid if errors[k] <= best * (1 + tolerance))
    return TopKResult(best_k, tuple(names[i] for i in order[:best_k]), errors)
