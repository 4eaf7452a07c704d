"""Bootstrap regression forests grown breadth-first with greedy variance splits.

Nodes are expanded level by level, so the random feature draws for the
first ``d`` levels do not depend on the maximum depth.  Truncating a tree
grown to depth 8 at depth ``d`` therefore reproduces the tree grown to
depth ``d`` with the same generator, and the first ``m`` trees of a forest
are the forest of ``m`` trees.  Tuning uses both facts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    """Fresh SeedSequence for ``seed``; copies so spawning never mutates the caller's."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    return np.random.SeedSequence(seed)


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray   # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray     # mean target of the node's bootstrap rows
    depth: np.ndarray

    def predict(self, X, max_depth: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=int)
        limit = int(self.depth.max()) if max_depth is None else max_depth
        for _ in range(limit):
            f = self.feature[node]
            go = (f >= 0) & (self.depth[node] < limit)
            if not go.any():
                break
            rows = np.flatnonzero(go)
            left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(left, self.left[node[rows]], self.right[node[rows]])
        return self.value[node]

    def predict_depths(self, X, depths) -> np.ndarray:
        """Predictions truncated at each depth in ``depths`` (ascending)."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=int)
        out = np.empty((len(depths), len(X)))
        d = 0
        for k, target in enumerate(depths):
            while d < target:
                f = self.feature[node]
                go = f >= 0
                if go.any():
                    rows = np.flatnonzero(go)
                    left = X[rows, f[rows]] <= self.threshold[node[rows]]
                    node[rows] = np.where(left, self.left[node[rows]], self.right[node[rows]])
                d += 1
            out[k] = self.value[node]
        return out


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int):
    """Greedy split maximising the reduction in squared error."""
    n = len(y)
    y = y - y.mean()
    sub = X[:, features]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    ys = y[order]
    csum = np.cumsum(ys, axis=0)[:-1]
    total = y.sum()
    nl = np.arange(1, n)[:, None]
    nr = n - nl
    # SSE reduction relative to the parent, up to a constant: sl^2/nl + sr^2/nr
    gain = csum ** 2 / nl + (total - csum) ** 2 / nr - total ** 2 / n
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    i, k = divmod(flat, len(features))
    if not np.isfinite(gain[i, k]) or gain[i, k] <= 1e-15 * max(1.0, (y ** 2).sum()):
        return None
    return int(features[k]), 0.5 * (xs[i, k] + xs[i + 1, k])


def grow_tree(X, y, max_depth: int, max_features: int, min_leaf: int, rng: np.random.Generator) -> Tree:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    feature, threshold, left, right, value, depth = [], [], [], [], [], []

    def add(rows, d):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        depth.append(d)
        return len(value) - 1

    frontier = [(add(np.arange(len(y)), 0), np.arange(len(y)))]
    for d in range(max_depth):
        nxt = []
        for node, rows in frontier:
            if len(rows) < 2 * min_leaf:
                continue
            feats = rng.choice(p, size=min(max_features, p), replace=False)
            split = _best_split(X[rows], y[rows], np.sort(feats), min_leaf)
            if split is None:
                continue
            f, thr = split
            mask = X[rows, f] <= thr
            lo, hi = rows[mask], rows[~mask]
            feature[node], threshold[node] = f, thr
            left[node] = add(lo, d + 1)
            right[node] = add(hi, d + 1)
            nxt += [(left[node], lo), (right[node], hi)]
        frontier = nxt
        if not frontier:
            break
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                np.array(value), np.array(depth))


@dataclass(frozen=True, eq=False)
class ForestModel:
    kind: str
    trees: tuple[Tree, ...]
    max_depth: int
    tuning: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        return np.mean([t.predict(X, self.max_depth) for t in self.trees], axis=0)


def grow_forest(X, y, n_trees: int, max_depth: int, max_features: int, min_leaf: int,
                seed) -> list[Tree]:
    ss = seed_sequence(seed)
    n = len(y)
    trees = []
    for child in ss.spawn(n_trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, n, n)
        trees.append(grow_tree(X[boot], y[boot], max_depth, max_features, min_leaf, rng))
    return trees


def fit_random_forest(X, y, X_val, y_val, seed, trees=(100, 300), depths=(3, 5, 8),
                      subsets=None, min_leaf: int = 5) -> ForestModel:
    """Pick (trees, depth, feature-subset size) by validation MSE.

    Ties keep the earlier grid point: fewer trees, shallower, fewer features.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    if subsets is None:
        subsets = (math.ceil(math.sqrt(p)), 7, p)
    subsets = tuple(sorted({min(s, p) for s in subsets}))
    trees, depths = tuple(sorted(trees)), tuple(sorted(depths))
    root = seed_sequence(seed)
    best = (np.inf, None)
    forests = {}
    for m, child in zip(subsets, root.spawn(len(subsets))):
        forest = grow_forest(X, y, trees[-1], depths[-1], m, min_leaf, child)
        forests[m] = forest
        per_tree = np.stack([t.predict_depths(X_val, depths) for t in forest])  # tree x depth x row
        cum = np.cumsum(per_tree, axis=0)
        for nt, (k, d) in product(trees, enumerate(depths)):
            pred = cum[nt - 1, k] / nt
            mse = float(np.mean((y_val - pred) ** 2))
            key = (nt, d, m)
            if mse < best[0] or (mse == best[0] and key < best[1]):
                best = (mse, key)
    mse, (nt, d, m) = best
    return ForestModel("RF", tuple(forests[m][:nt]), d,
                       {"trees": nt, "depth": d, "max_features": m, "val_mse": mse})
