"""Ensemble combiners: majority voting over the three base labels, and
random-forest stacking over the 17-entry meta-feature vector
[SVM scores (6) | CNN pre-softmax scores (6) | RNN scores (5)].

The forest is binary CART with the gini criterion, one bootstrap sample per
tree, and a random feature subset of size floor(sqrt(n_features)) evaluated at
each node with midpoint thresholds. Nodes stop splitting when pure, when they
hold fewer than 2 samples, or when no candidate split strictly decreases the
weighted impurity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .labels import NEG, DEFAULT_LABELS, LabelSet

META_FEATURE_COUNT = 17


def vote(svm_label: str, cnn_label: str, rnn_label: str, neg: str = NEG,
         unanimous: bool = False) -> str:
    """Majority voting: a positive class predicted by at least 2 of the 3
    models wins; otherwise NEG (NEG agreement and three-way disagreement both
    land there). With `unanimous` the positive class must be predicted by all
    three models."""
    needed = 3 if unanimous else 2
    counts: dict[str, int] = {}
    for label in (svm_label, cnn_label, rnn_label):
        counts[label] = counts.get(label, 0) + 1
    for label, count in counts.items():
        if label != neg and count >= needed:
            return label
    return neg


def meta_feature_names(label_set: LabelSet = DEFAULT_LABELS) -> list[str]:
    return (["svm:%s" % lab for lab in label_set]
            + ["cnn:%s" % lab for lab in label_set]
            + ["rnn:%s" % lab for lab in label_set.positives])


def build_meta_features(svm_scores, cnn_pre_softmax, rnn_scores) -> np.ndarray:
    """Concatenate the raw score blocks in the fixed order; no normalization."""
    svm_scores = np.asarray(svm_scores, dtype=np.float64)
    cnn_pre_softmax = np.asarray(cnn_pre_softmax, dtype=np.float64)
    rnn_scores = np.asarray(rnn_scores, dtype=np.float64)
    if svm_scores.shape != (6,):
        raise ValueError("expected 6 SVM scores, got shape %r" % (svm_scores.shape,))
    if cnn_pre_softmax.shape != (6,):
        raise ValueError("expected 6 CNN scores, got shape %r" % (cnn_pre_softmax.shape,))
    if rnn_scores.shape != (5,):
        raise ValueError("expected 5 RNN scores, got shape %r" % (rnn_scores.shape,))
    return np.concatenate([svm_scores, cnn_pre_softmax, rnn_scores])


# ---------------------------------------------------------------------------
# Random forest


def gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


@dataclass
class Tree:
    """Flattened binary tree. feature[i] == -1 marks a leaf; children are node
    indices; every node stores its class histogram."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    histogram: list[list[int]] = field(default_factory=list)

    def add_node(self, counts: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.histogram.append([int(c) for c in counts])
        return len(self.feature) - 1

    def leaf_class(self, node: int) -> int:
        return int(np.argmax(self.histogram[node]))  # ties -> lowest class index

    def predict(self, x) -> int:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] \
                else self.right[node]
        return self.leaf_class(node)


@dataclass
class RandomForest:
    trees: list[Tree]
    n_features: int
    n_classes: int


def _best_split(x: np.ndarray, y: np.ndarray, node_counts: np.ndarray, n_classes: int,
                rng: np.random.Generator, max_features: int):
    """Best (feature, midpoint threshold) by weighted gini over a random feature
    subset. Features that are constant within the node do not count against the
    subset size, so a split is found whenever any feature varies."""
    n = len(y)
    node_gini = gini(node_counts)
    best = None  # (weighted_gini, feature, threshold)
    viable = 0
    for f in rng.permutation(x.shape[1]):
        values = x[:, f]
        order = np.argsort(values, kind="stable")
        sv = values[order]
        sy = y[order]
        if sv[0] == sv[-1]:
            continue
        viable += 1
        left_counts = np.zeros(n_classes, dtype=np.int64)
        for i in range(n - 1):
            left_counts[sy[i]] += 1
            if sv[i] == sv[i + 1]:
                continue
            right_counts = node_counts - left_counts
            n_left = i + 1
            weighted = (n_left * gini(left_counts) + (n - n_left) * gini(right_counts)) / n
            if best is None or weighted < best[0] - 1e-12:
                best = (weighted, int(f), float((sv[i] + sv[i + 1]) / 2.0))
        if viable >= max_features:
            break
    if best is None or best[0] >= node_gini - 1e-12:
        return None
    return best[1], best[2]


def _grow_tree(x: np.ndarray, y: np.ndarray, n_classes: int, rng: np.random.Generator,
               max_features: int) -> Tree:
    tree = Tree()
    stack = [(np.arange(len(y)), tree.add_node(np.bincount(y, minlength=n_classes)))]
    while stack:
        idx, node = stack.pop()
        counts = np.bincount(y[idx], minlength=n_classes)
        if len(idx) < 2 or gini(counts) == 0.0:
            continue
        split = _best_split(x[idx], y[idx], counts, n_classes, rng, max_features)
        if split is None:
            continue
        feature, threshold = split
        go_left = x[idx, feature] <= threshold
        left_idx, right_idx = idx[go_left], idx[~go_left]
        tree.feature[node] = feature
        tree.threshold[node] = threshold
        left = tree.add_node(np.bincount(y[left_idx], minlength=n_classes))
        right = tree.add_node(np.bincount(y[right_idx], minlength=n_classes))
        tree.left[node] = left
        tree.right[node] = right
        stack.append((right_idx, right))
        stack.append((left_idx, left))
    return tree


def rf_train(meta_vectors, labels, n_classes: int, tree_count: int = 500, seed: int = 0,
             bootstrap: bool = True, max_features: int | None = None) -> RandomForest:
    x = np.asarray(meta_vectors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    if max_features is None:
        max_features = max(1, int(math.sqrt(x.shape[1])))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(tree_count):
        idx = rng.integers(0, len(y), len(y)) if bootstrap else np.arange(len(y))
        trees.append(_grow_tree(x[idx], y[idx], n_classes, rng, max_features))
    return RandomForest(trees=trees, n_features=x.shape[1], n_classes=n_classes)


def rf_predict(forest: RandomForest, meta_features) -> int:
    """Majority vote over the per-tree leaf classes; ties go to the lowest
    class index."""
    x = np.asarray(meta_features, dtype=np.float64)
    if x.shape != (forest.n_features,):
        raise ValueError("expected %d meta features, got shape %r"
                         % (forest.n_features, x.shape))
    votes = np.zeros(forest.n_classes, dtype=np.int64)
    for tree in forest.trees:
        votes[tree.predict(x)] += 1
    return int(np.argmax(votes))


# ---------------------------------------------------------------------------
# Serialization

FORMAT = "cprex-rf/1"


def save_forest(forest: RandomForest, path, feature_names: list[str]):
    if len(feature_names) != forest.n_features:
        raise ValueError("feature name list does not match forest width")
    payload = {
        "format": FORMAT,
        "n_features": forest.n_features,
        "n_classes": forest.n_classes,
        "feature_names": feature_names,
        "trees": [
            {"feature": t.feature, "threshold": t.threshold, "left": t.left,
             "right": t.right, "histogram": t.histogram}
            for t in forest.trees
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_forest(path, expected_feature_names: list[str] | None = None) -> RandomForest:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT:
        raise ValueError("unsupported forest format %r" % payload.get("format"))
    if expected_feature_names is not None and payload["feature_names"] != expected_feature_names:
        raise ValueError("forest was trained on a different meta-feature ordering")
    trees = [
        Tree(feature=t["feature"], threshold=t["threshold"], left=t["left"],
             right=t["right"], histogram=t["histogram"])
        for t in payload["trees"]
    ]
    return RandomForest(trees=trees, n_features=payload["n_features"],
                        n_classes=payload["n_classes"])
