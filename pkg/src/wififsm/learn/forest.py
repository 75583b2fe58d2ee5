"""Bagged CART trees (gini impurity) with vote-fraction probabilities."""

from __future__ import annotations

import math

import numpy as np

LEAF = -1


def _best_split(x: np.ndarray, y: np.ndarray):
    """Best gini threshold on one feature; returns (impurity, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    # Candidate cut after position k (1..n-1) only where the value changes.
    valid = xs[1:] != xs[:-1]
    if not valid.any():
        return None
    pos_left = np.cumsum(ys)[:-1]
    n_left = np.arange(1, n)
    n_right = n - n_left
    pos_right = ys.sum() - pos_left
    p_l = pos_left / n_left
    p_r = pos_right / n_right
    gini = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
    gini = np.where(valid, gini, np.inf)
    k = int(np.argmin(gini))
    return float(gini[k]), float((xs[k] + xs[k + 1]) / 2)


class DecisionTree:
    def __init__(self, max_depth: int = 12, max_features: int | None = None, min_samples_split: int = 2):
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "DecisionTree":
        d = X.shape[1]
        k = self.max_features or d
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(idx):
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(float(y[idx].mean()))
            return len(feature) - 1

        root = new_node(np.arange(len(y)))
        stack = [(root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            yy = y[idx]
            if depth >= self.max_depth or len(idx) < self.min_samples_split or yy.min() == yy.max():
                continue
            best = None
            # Look at k random features; keep drawing if none of them can split.
            for rank, f in enumerate(rng.permutation(d)):
                if rank >= k and best is not None:
                    break
                found = _best_split(X[idx, f], yy)
                if found is not None and (best is None or found[0] < best[0]):
                    best = (found[0], found[1], f)
            if best is None:
                continue
            _, thr, f = best
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = int(f), thr
            left[node] = new_node(li)
            right[node] = new_node(ri)
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))
        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value)
        return self

    def leaf_values(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            ids = np.nonzero(active)[0]
            cur = node[ids]
            goes_left = X[ids, self.feature[cur]] <= self.threshold[cur]
            node[ids] = np.where(goes_left, self.left[cur], self.right[cur])
            active[ids] = self.feature[node[ids]] != LEAF
        return self.value[node]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.leaf_values(X) > 0.5).astype(int)

    def get_state(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_state(cls, state: dict) -> "DecisionTree":
        tree = cls()
        tree.feature = np.asarray(state["feature"], dtype=np.int64)
        tree.threshold = np.asarray(state["threshold"], dtype=float)
        tree.left = np.asarray(state["left"], dtype=np.int64)
        tree.right = np.asarray(state["right"], dtype=np.int64)
        tree.value = np.asarray(state["value"], dtype=float)
        return tree


class RandomForest:
    def __init__(self, n_trees: int = 100, max_depth: int = 12, max_features: int | str = "sqrt"):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.max_features = max_features
        self.trees: list[DecisionTree] = []

    def _features_per_split(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(d)))
        return int(self.max_features)

    def fit(self, X, y, seed: int = 0) -> "RandomForest":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        k = self._features_per_split(X.shape[1])
        self.trees = []
        for child in np.random.SeedSequence(seed).spawn(self.n_trees):
            rng = np.random.default_rng(child)
            boot = rng.integers(0, len(y), size=len(y))
            self.trees.append(DecisionTree(self.max_depth, k).fit(X[boot], y[boot], rng))
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        votes = np.zeros(len(X))
        for t in self.trees:
            votes += t.predict(X)
        return votes / len(self.trees)

    def get_state(self) -> dict:
        return {"trees": [t.get_state() for t in self.trees]}

    def set_state(self, state: dict) -> "RandomForest":
        self.trees = [DecisionTree.from_state(s) for s in state["trees"]]
        return self
