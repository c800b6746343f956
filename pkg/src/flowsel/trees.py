"""CART decision tree and random forest used to validate feature subsets.

Splits are exhaustive greedy Gini searches over midpoints of consecutive
sorted distinct values; `<=` routes left.  Ties go to the lowest feature
index, then the lowest threshold, and zero-gain splits are still taken on
impure nodes (otherwise XOR-like data would stop at the root).  Forest trees
get independent generators seeded as `seed + tree_index`, so results do not
depend on build order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit
from .errors import DataError
from .ingest import Dataset


@dataclass
class TreeNode:
    """Split node (feature, threshold, children) or leaf (class counts)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    counts: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    criterion: str = "gini"
    seed: int = 0

    def __post_init__(self):
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.criterion != "gini":
            raise ValueError("only the gini criterion is supported")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    features_per_split: int | None = None  # None -> round(sqrt(m))
    bootstrap: bool = True
    tree: TreeParams = field(default_factory=TreeParams)
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")


@dataclass
class Forest:
    trees: list[TreeNode]
    tree_seeds: list[int]
    params: ForestParams
    n_classes: int


def gini(counts) -> float:
    """Gini impurity 1 - sum((c_k / n)^2)."""
    counts = np.asarray(counts, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    n = counts.sum()
    if n < 1:
        raise ValueError("need at least one sample")
    p = counts / n
    return float(1.0 - (p * p).sum())


@njit(cache=True)
def _best_split(X, y, rows, feats, K):
    """Exhaustive split search on one node.

    Returns (feature, threshold, weighted child impurity); feature is -1 when
    every candidate column is constant on the node.  Candidate features must
    be sorted ascending so the first strict minimum realizes the tie rule.
    """
    n = rows.shape[0]
    col = np.empty(n)
    ysub = np.empty(n, dtype=np.int64)
    total = np.zeros(K, dtype=np.int64)
    left = np.zeros(K, dtype=np.int64)
    for i in range(n):
        ysub[i] = y[rows[i]]
        total[ysub[i]] += 1

    best_imp = np.inf
    best_feat = -1
    best_thr = 0.0
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for i in range(n):
            col[i] = X[rows[i], f]
        order = np.argsort(col)
        for k in range(K):
            left[k] = 0
        nl = 0
        for i in range(n - 1):
            o = order[i]
            left[ysub[o]] += 1
            nl += 1
            v = col[o]
            vnext = col[order[i + 1]]
            if v == vnext:
                continue
            nr = n - nl
            sl = 0.0
            sr = 0.0
            for k in range(K):
                cl = left[k]
                cr = total[k] - cl
                sl += cl * cl
                sr += cr * cr
            imp = (nl - sl / nl + nr - sr / nr) / n
            if imp < best_imp:
                thr = v + 0.5 * (vnext - v)
                if thr >= vnext:  # adjacent floats: fall back to the left value
                    thr = v
                best_imp = imp
                best_feat = f
                best_thr = thr
    return best_feat, best_thr, best_imp


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    params: TreeParams,
    n_classes: int,
    rng: np.random.Generator | None,
    features_per_split: int | None,
) -> TreeNode:
    """Iterative preorder construction (left subtree first).

    The explicit stack keeps deep consistent-data trees from hitting Python's
    recursion limit; preorder makes the per-split RNG draws reproducible.
    """
    m = X.shape[1]
    all_feats = np.arange(m, dtype=np.int64)
    subsample = features_per_split is not None and features_per_split < m
    root = TreeNode(counts=np.bincount(y[rows], minlength=n_classes))
    stack = [(root, rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        counts = node.counts
        n = node_rows.size
        if (
            counts.max() == n  # pure
            or n < params.min_samples_split
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            continue
        if subsample:
            feats = np.sort(rng.choice(m, size=features_per_split, replace=False))
        else:
            feats = all_feats
        f, thr, _ = _best_split(X, y, node_rows, feats, n_classes)
        if f < 0:
            continue
        mask = X[node_rows, f] <= thr
        left_rows = node_rows[mask]
        right_rows = node_rows[~mask]
        node.feature = int(f)
        node.threshold = float(thr)
        node.counts = None
        node.left = TreeNode(counts=np.bincount(y[left_rows], minlength=n_classes))
        node.right = TreeNode(counts=np.bincount(y[right_rows], minlength=n_classes))
        stack.append((node.right, right_rows, depth + 1))
        stack.append((node.left, left_rows, depth + 1))
    return root


def dt_fit(train: Dataset, params: TreeParams = TreeParams()) -> TreeNode:
    """Fit a CART classifier on the whole dataset."""
    if train.n == 0:
        raise DataError("cannot fit a tree on an empty dataset")
    X = np.ascontiguousarray(train.X)
    rows = np.arange(train.n, dtype=np.int64)
    return _grow(X, train.y, rows, params, train.k, None, None)


def _flatten(root: TreeNode):
    """Array form (feature, threshold, left, right, leaf class) for routing."""
    feats, thrs, lefts, rights, leaf_cls = [], [], [], [], []

    def add(node: TreeNode) -> int:
        idx = len(feats)
        feats.append(node.feature)
        thrs.append(node.threshold)
        lefts.append(-1)
        rights.append(-1)
        leaf_cls.append(int(np.argmax(node.counts)) if node.is_leaf else -1)
        return idx

    stack = [(root, -1, False)]
    while stack:
        node, parent, is_right = stack.pop()
        idx = add(node)
        if parent >= 0:
            (rights if is_right else lefts)[parent] = idx
        if not node.is_leaf:
            stack.append((node.right, idx, True))
            stack.append((node.left, idx, False))
    return (
        np.array(feats, dtype=np.int64),
        np.array(thrs, dtype=np.float64),
        np.array(lefts, dtype=np.int64),
        np.array(rights, dtype=np.int64),
        np.array(leaf_cls, dtype=np.int64),
    )


@njit(cache=True)
def _route(X, feats, thrs, lefts, rights, leaf_cls, out):
    for i in range(X.shape[0]):
        node = 0
        while feats[node] >= 0:
            if X[i, feats[node]] <= thrs[node]:
                node = lefts[node]
            else:
                node = rights[node]
        out[i] = leaf_cls[node]


def _required_width(root: TreeNode) -> int:
    width = 0
    stack = [root]
    while stack:
        node = stack.pop()
        if not node.is_leaf:
            width = max(width, node.feature + 1)
            stack.append(node.left)
            stack.append(node.right)
    return width


def dt_predict(tree: TreeNode, X) -> np.ndarray:
    """Route rows down the tree; leaf majority, ties to the lowest class."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if X.shape[1] < _required_width(tree):
        raise ValueError(
            f"rows have {X.shape[1]} features, tree needs {_required_width(tree)}"
        )
    out = np.empty(X.shape[0], dtype=np.int64)
    if X.shape[0]:
        _route(X, *_flatten(tree), out)
    return out


def rf_fit(train: Dataset, params: ForestParams = ForestParams()) -> Forest:
    """Fit a bootstrap-aggregated forest of CART trees."""
    if train.n == 0:
        raise DataError("cannot fit a forest on an empty dataset")
    m = train.m
    fps = params.features_per_split
    if fps is None:
        fps = max(1, round(math.sqrt(m)))
    if fps > m:
        raise ValueError(f"features_per_split {fps} exceeds feature count {m}")
    X = np.ascontiguousarray(train.X)
    all_rows = np.arange(train.n, dtype=np.int64)

    trees = []
    seeds = []
    for t in range(params.n_trees):
        seed = params.seed + t
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, train.n, size=train.n) if params.bootstrap else all_rows
        trees.append(_grow(X, train.y, rows, params.tree, train.k, rng, fps))
        seeds.append(seed)
    return Forest(trees=trees, tree_seeds=seeds, params=params, n_classes=train.k)


def rf_predict(forest: Forest, X) -> np.ndarray:
    """Unweighted majority vote over trees; ties to the lowest class index."""
    X = np.asarray(X, dtype=np.float64)
    votes = np.zeros((X.shape[0], forest.n_classes), dtype=np.int64)
    for tree in forest.trees:
        pred = dt_predict(tree, X)
        votes[np.arange(X.shape[0]), pred] += 1
    return votes.argmax(axis=1) if X.shape[0] else np.empty(0, dtype=np.int64)


def tree_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"counts": [int(c) for c in node.counts]}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": tree_to_dict(node.left),
        "right": tree_to_dict(node.right),
    }


def tree_from_dict(doc: dict) -> TreeNode:
    if "counts" in doc:
        return TreeNode(counts=np.array(doc["counts"], dtype=np.int64))
    return TreeNode(
        feature=int(doc["feature"]),
        threshold=float(doc["threshold"]),
        left=tree_from_dict(doc["left"]),
        right=tree_from_dict(doc["right"]),
    )


def forest_to_dict(forest: Forest) -> dict:
    return {
        "n_classes": forest.n_classes,
        "tree_seeds": list(forest.tree_seeds),
        "n_trees": forest.params.n_trees,
        "bootstrap": forest.params.bootstrap,
        "features_per_split": forest.params.features_per_split,
        "trees": [tree_to_dict(t) for t in forest.trees],
    }
