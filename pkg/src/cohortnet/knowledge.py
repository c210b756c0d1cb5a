"""Rule-based knowledge base: CART-style decision tree and random forest,
used to label synthetic samples and to report the learned rules.

Splits minimize Gini impurity over midpoint thresholds between consecutive
distinct feature values.  All tie-breaks are deterministic: first feature in
consideration order, lowest threshold, smallest class index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import COHORTS

KB_MAGIC = "cohortnet-kb v1"


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    counts: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.counts is not None


@dataclass
class Rule:
    """Conjunction of threshold predicates leading to one leaf."""

    predicates: list[tuple[int, str, float]]  # (feature, "<=" or ">", threshold)
    klass: int

    def matches(self, x: np.ndarray) -> bool:
        for f, op, t in self.predicates:
            if op == "<=" and not x[f] <= t:
                return False
            if op == ">" and not x[f] > t:
                return False
        return True

    def render(self, feature_names=None, class_names=None) -> str:
        def fname(f):
            return feature_names[f] if feature_names else f"x[{f}]"
        cname = class_names[self.klass] if class_names else f"class {self.klass}"
        if not self.predicates:
            return f"always -> {cname}"
        body = " and ".join(f"{fname(f)} {op} {t:.6g}" for f, op, t in self.predicates)
        return f"{body} -> {cname}"


class DecisionTree:
    def __init__(self, max_depth: int | None = None, min_samples_leaf: int = 1,
                 max_features: int | None = None, seed: int = 0):
        if min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.seed = seed
        self.root: TreeNode | None = None
        self.n_classes = 0

    def fit(self, x: np.ndarray, y: np.ndarray, n_classes: int | None = None) -> "DecisionTree":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
            raise ValueError("x must be 2-D with one label per row")
        self.n_classes = int(n_classes if n_classes is not None else y.max() + 1)
        rng = np.random.default_rng(self.seed)
        self.root = self._grow(x, y, 0, rng)
        return self

    def _grow(self, x: np.ndarray, y: np.ndarray, depth: int,
              rng: np.random.Generator) -> TreeNode:
        counts = np.bincount(y, minlength=self.n_classes)
        n = y.size
        if counts.max() == n or (self.max_depth is not None and depth >= self.max_depth) \
                or n < 2 * self.min_samples_leaf:
            return TreeNode(counts=counts)
        d = x.shape[1]
        if self.max_features is not None and self.max_features < d:
            feats = np.sort(rng.choice(d, size=self.max_features, replace=False))
        else:
            feats = np.arange(d)
        split = self._best_split(x, y, feats)
        if split is None:
            return TreeNode(counts=counts)
        feature, threshold = split
        mask = x[:, feature] <= threshold
        left = self._grow(x[mask], y[mask], depth + 1, rng)
        right = self._grow(x[~mask], y[~mask], depth + 1, rng)
        return TreeNode(feature=feature, threshold=threshold, left=left, right=right)

    def _best_split(self, x: np.ndarray, y: np.ndarray, feats: np.ndarray):
        n = y.size
        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), y] = 1.0
        best = None
        best_score = -np.inf
        for f in feats:
            order = np.argsort(x[:, f], kind="stable")
            xs = x[order, f]
            cum = np.cumsum(onehot[order], axis=0)
            total = cum[-1]
            nl = np.arange(1, n, dtype=np.float64)
            nr = n - nl
            left = cum[:-1]
            # minimizing weighted Gini == maximizing sum of squared counts / size
            score = (left ** 2).sum(axis=1) / nl + ((total - left) ** 2).sum(axis=1) / nr
            valid = (xs[1:] > xs[:-1]) & (nl >= self.min_samples_leaf) \
                & (nr >= self.min_samples_leaf)
            if not valid.any():
                continue
            score = np.where(valid, score, -np.inf)
            i = int(np.argmax(score))
            if score[i] > best_score:
                best_score = score[i]
                best = (int(f), float((xs[i] + xs[i + 1]) / 2.0))
        return best

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.empty(x.shape[0], dtype=np.int64)

        def descend(node: TreeNode, idx: np.ndarray) -> None:
            if node.is_leaf:
                out[idx] = int(np.argmax(node.counts))
                return
            mask = x[idx, node.feature] <= node.threshold
            descend(node.left, idx[mask])
            descend(node.right, idx[~mask])

        descend(self.root, np.arange(x.shape[0]))
        return out

    def n_leaves(self) -> int:
        def count(node: TreeNode) -> int:
            return 1 if node.is_leaf else count(node.left) + count(node.right)
        return count(self.root)

    def rules(self) -> list[Rule]:
        out: list[Rule] = []

        def walk(node: TreeNode, preds: list[tuple[int, str, float]]) -> None:
            if node.is_leaf:
                out.append(Rule(list(preds), int(np.argmax(node.counts))))
                return
            walk(node.left, preds + [(node.feature, "<=", node.threshold)])
            walk(node.right, preds + [(node.feature, ">", node.threshold)])

        walk(self.root, [])
        return out


class RandomForest:
    def __init__(self, n_trees: int = 100, max_depth: int | None = None,
                 min_samples_leaf: int = 1, bootstrap: bool = True,
                 max_features: str | int | None = "sqrt", seed: int = 0):
        if n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.max_features = max_features
        self.seed = seed
        self.trees: list[DecisionTree] = []
        self.n_classes = 0

    def _resolve_max_features(self, d: int) -> int | None:
        if self.max_features == "sqrt":
            return max(1, int(np.ceil(np.sqrt(d))))
        return self.max_features

    def fit(self, x: np.ndarray, y: np.ndarray, n_classes: int | None = None) -> "RandomForest":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self.n_classes = int(n_classes if n_classes is not None else y.max() + 1)
        mf = self._resolve_max_features(x.shape[1])
        self.trees = []
        for t in range(self.n_trees):
            rng = np.random.default_rng([self.seed, t])
            if self.bootstrap:
                idx = rng.integers(0, x.shape[0], size=x.shape[0])
                xt, yt = x[idx], y[idx]
            else:
                xt, yt = x, y
            tree = DecisionTree(self.max_depth, self.min_samples_leaf, mf,
                                seed=int(rng.integers(0, 2 ** 31)))
            tree.fit(xt, yt, self.n_classes)
            self.trees.append(tree)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        votes = np.zeros((x.shape[0], self.n_classes), dtype=np.int64)
        for tree in self.trees:
            votes[np.arange(x.shape[0]), tree.predict(x)] += 1
        return votes.argmax(axis=1)  # ties -> smallest class index


@dataclass
class KnowledgeBase:
    kind: str
    model: DecisionTree | RandomForest
    n_features: int

    def label(self, samples: np.ndarray) -> np.ndarray:
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if samples.shape[1] != self.n_features:
            raise ValueError(f"samples have width {samples.shape[1]}, "
                             f"knowledge base was fitted on {self.n_features}")
        return self.model.predict(samples)

    def rules(self) -> list[Rule]:
        if self.kind != "tree":
            raise ValueError("rules are reported for tree knowledge bases; "
                             "inspect forest trees individually")
        return self.model.rules()

    def render_rules(self, feature_names=None, class_names=None) -> list[str]:
        if class_names is None and getattr(self.model, "n_classes", 0) == len(COHORTS):
            class_names = COHORTS
        return [r.render(feature_names, class_names) for r in self.rules()]


def fit_kb(x: np.ndarray, y: np.ndarray, kind: str = "forest",
           max_depth: int | None = None, min_samples_leaf: int = 1,
           n_trees: int = 100, seed: int = 0,
           n_classes: int | None = None) -> KnowledgeBase:
    """Fit the labeling model on the real training set."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    nc = int(n_classes if n_classes is not None else y.max() + 1)
    counts = np.bincount(y, minlength=nc)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"class(es) {empty.tolist()} have no training samples")
    if kind == "tree":
        model: DecisionTree | RandomForest = DecisionTree(
            max_depth, min_samples_leaf, None, seed).fit(x, y, nc)
    elif kind == "forest":
        model = RandomForest(n_trees, max_depth, min_samples_leaf,
                             seed=seed).fit(x, y, nc)
    else:
        raise ValueError(f"unknown knowledge-base kind {kind!r}")
    return KnowledgeBase(kind, model, x.shape[1])


def _write_node(lines: list[str], node: TreeNode) -> None:
    if node.is_leaf:
        lines.append("leaf " + ",".join(str(int(c)) for c in node.counts))
    else:
        lines.append(f"node {node.feature} {node.threshold!r}")
        _write_node(lines, node.left)
        _write_node(lines, node.right)


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    trees = [kb.model] if kb.kind == "tree" else kb.model.trees
    lines = [KB_MAGIC, f"kind {kb.kind}", f"features {kb.n_features}",
             f"classes {trees[0].n_classes}", f"trees {len(trees)}"]
    for t in trees:
        _write_node(lines, t.root)
    Path(path).write_text("\n".join(lines) + "\n")


def load_kb(path: str | Path) -> KnowledgeBase:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != KB_MAGIC:
        raise ValueError(f"{path}: not a {KB_MAGIC} file")
    header = dict(line.split(" ", 1) for line in lines[1:5])
    kind = header["kind"]
    n_features = int(header["features"])
    n_classes = int(header["classes"])
    n_trees = int(header["trees"])
    pos = 5

    def read_node() -> TreeNode:
        nonlocal pos
        parts = lines[pos].split()
        pos += 1
        if parts[0] == "leaf":
            return TreeNode(counts=np.array([int(c) for c in parts[1].split(",")]))
        node = TreeNode(feature=int(parts[1]), threshold=float(parts[2]))
        node.left = read_node()
        node.right = read_node()
        return node

    trees = []
    for _ in range(n_trees):
        t = DecisionTree()
        t.n_classes = n_classes
        t.root = read_node()
        trees.append(t)
    if kind == "tree":
        return KnowledgeBase("tree", trees[0], n_features)
    forest = RandomForest(n_trees=n_trees)
    forest.n_classes = n_classes
    forest.trees = trees
    return KnowledgeBase("forest", forest, n_features)
