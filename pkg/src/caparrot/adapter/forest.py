"""Random forest of Gini decision trees, written against numpy only.

Trees are grown on bootstrap resamples with ceil(sqrt(F)) candidate features
per split and a depth cap. Prediction is a hard majority vote; ties go to the
lowest class index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_NAME = "caparrot-forest"
FORMAT_VERSION = 1


@dataclass
class Tree:
    feature: np.ndarray      # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray        # majority class at every node

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            idx = rows[inner]
            n = node[inner]
            go_left = X[idx, f[inner]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])
        return self.label[node]

    def predict_one(self, x) -> int:
        """Single-row traversal; much cheaper than :meth:`predict` for one sample."""
        lists = self.__dict__.get("_lists")
        if lists is None:
            lists = self.__dict__["_lists"] = (self.feature.tolist(), self.threshold.tolist(),
                                               self.left.tolist(), self.right.tolist(),
                                               self.label.tolist())
        feature, threshold, left, right, label = lists
        node = 0
        while feature[node] >= 0:
            node = left[node] if x[feature[node]] <= threshold[node] else right[node]
        return label[node]

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "label")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=np.int64), np.asarray(d["threshold"], dtype=float),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["label"], dtype=np.int64))


def _best_split(X: np.ndarray, Y1h: np.ndarray, features: np.ndarray):
    """Best Gini split over ``features``; returns (feature, threshold, impurity) or None."""
    n = len(X)
    best = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        cl = np.cumsum(Y1h[order], axis=0)[:-1]
        total = cl[-1] + Y1h[order[-1]]
        cr = total - cl
        nl = np.arange(1, n, dtype=float)
        nr = n - nl
        # weighted child impurity, times n
        imp = (nl - (cl * cl).sum(1) / nl) + (nr - (cr * cr).sum(1) / nr)
        imp = np.where(valid, imp, np.inf)
        i = int(np.argmin(imp))
        if best is None or imp[i] < best[2]:
            best = (int(f), 0.5 * (xs[i] + xs[i + 1]), float(imp[i]))
    return best


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int,
              max_features: int, rng: np.random.Generator) -> Tree:
    feature, threshold, left, right, label = [], [], [], [], []
    Y1h = np.eye(n_classes)[y]

    def new_node(idx):
        counts = Y1h[idx].sum(0)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(int(np.argmax(counts)))
        return len(feature) - 1, counts

    root, counts = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0, counts)]
    n_features = X.shape[1]
    while stack:
        node, idx, depth, counts = stack.pop()
        if depth >= max_depth or len(idx) < 2 or np.count_nonzero(counts) < 2:
            continue
        feats = rng.choice(n_features, size=max_features, replace=False)
        split = _best_split(X[idx], Y1h[idx], feats)
        if split is None:
            continue
        f, thr, _ = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        lnode, lcounts = new_node(li)
        rnode, rcounts = new_node(ri)
        feature[node], threshold[node], left[node], right[node] = f, thr, lnode, rnode
        stack.append((rnode, ri, depth + 1, rcounts))
        stack.append((lnode, li, depth + 1, lcounts))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(label, dtype=np.int64))


@dataclass
class ForestModel:
    trees: list[Tree]
    n_classes: int
    max_depth: int
    classes: list[str] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)
    oob_accuracy: float | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        counts = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            counts[rows, tree.predict(X)] += 1
        return counts

    def predict_one(self, x) -> int:
        counts = [0] * self.n_classes
        x = list(map(float, x))
        for tree in self.trees:
            counts[tree.predict_one(x)] += 1
        return counts.index(max(counts))

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum: lowest class index wins ties
        return np.argmax(self.votes(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "n_classes": self.n_classes,
            "classes": list(self.classes),
            "features": list(self.feature_names),
            "oob_accuracy": self.oob_accuracy,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format") != FORMAT_NAME:
            raise ValueError("not a forest model file")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        return cls([Tree.from_dict(t) for t in d["trees"]], d["n_classes"], d["max_depth"],
                   d.get("classes", []), d.get("features", []), d.get("oob_accuracy"))

    def save(self, path: str | Path) -> None:
        # hyperparameters first so the header is readable with `head`
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ForestModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_forest(X, y, n_trees: int = 100, max_depth: int = 15, seed: int = 0,
                 classes: list[str] | None = None,
                 feature_names: list[str] | None = None) -> ForestModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain at least two classes")
    n_classes = int(y.max()) + 1 if classes is None else len(classes)
    max_features = math.ceil(math.sqrt(X.shape[1]))
    rng = np.random.default_rng(seed)
    n = len(y)
    trees = []
    oob_votes = np.zeros((n, n_classes), dtype=np.int64)
    for _ in range(n_trees):
        sample = rng.integers(0, n, size=n)
        tree = grow_tree(X[sample], y[sample], n_classes, max_depth, max_features, rng)
        trees.append(tree)
        oob = np.ones(n, dtype=bool)
        oob[sample] = False
        if oob.any():
            rows = np.flatnonzero(oob)
            oob_votes[rows, tree.predict(X[rows])] += 1
    seen = oob_votes.sum(1) > 0
    oob_acc = float(np.mean(np.argmax(oob_votes[seen], 1) == y[seen])) if seen.any() else None
    return ForestModel(trees, n_classes, max_depth, list(classes or []), list(feature_names or []),
                       oob_acc)
