"""Classification and regression trees.

Classification trees split on Gini impurity and store class proportions in
their leaves; regression trees split on squared-error reduction. Every leaf
keeps the training rows that reached it, so a tree can also act as a donor
pool for synthesis (:func:`sample_from_leaf`).

The numeric split scan is compiled with numba; categorical splits are scored
in numpy from per-level summaries.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .dataset import Dataset

MAX_EXHAUSTIVE_LEVELS = 10


@dataclass(frozen=True)
class TreeConfig:
    min_leaf: int = 20
    max_depth: int = 30
    complexity: float = 1e-4
    seed: int | None = None

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.complexity < 0:
            raise ValueError("complexity must be >= 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


# Defaults for synthesis trees: small leaves, almost no complexity penalty.
SYNTHESIS_TREE = TreeConfig(min_leaf=5, max_depth=30, complexity=1e-8)


@dataclass(eq=False)
class Node:
    rows: np.ndarray
    depth: int
    impurity: float  # n * (Gini or variance) of the node
    value: np.ndarray | float
    feature: int = -1
    threshold: float = np.nan
    left_levels: frozenset = frozenset()
    right_levels: frozenset = frozenset()
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])


@dataclass(eq=False)
class Tree:
    kind: str  # "classification" or "regression"
    nodes: list[Node]
    categorical: np.ndarray
    n_classes: int
    y: np.ndarray
    config: TreeConfig
    feature_names: tuple[str, ...] = ()

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @property
    def leaves(self) -> list[Node]:
        return [nd for nd in self.nodes if nd.is_leaf]

    @property
    def n_splits(self) -> int:
        return sum(not nd.is_leaf for nd in self.nodes)

    def depth(self) -> int:
        return max(nd.depth for nd in self.nodes)


# -- numeric split scan -------------------------------------------------------

@numba.njit(cache=True)
def _scan_gini(XT, srt, y, n_classes, skip, min_leaf):
    p, n = srt.shape
    gains = np.full(p, -np.inf)
    thresholds = np.zeros(p)
    total = np.zeros(n_classes)
    for i in range(n):
        total[y[srt[0, i]]] += 1.0
    ssq_total = 0.0
    for c in range(n_classes):
        ssq_total += total[c] * total[c]
    parent = n - ssq_total / n
    left = np.empty(n_classes)
    for j in range(p):
        if skip[j]:
            continue
        left[:] = 0.0
        ssq_left = 0.0
        ssq_right = ssq_total
        best = -np.inf
        best_thr = 0.0
        for t in range(n - 1):
            c = y[srt[j, t]]
            ssq_left += 2.0 * left[c] + 1.0
            ssq_right += -2.0 * (total[c] - left[c]) + 1.0
            left[c] += 1.0
            nl = t + 1
            nr = n - nl
            if nl < min_leaf:
                continue
            if nr < min_leaf:
                break
            x0 = XT[j, srt[j, t]]
            x1 = XT[j, srt[j, t + 1]]
            if not x1 > x0:
                continue
            gain = parent - (n - ssq_left / nl - ssq_right / nr)
            if gain > best:
                best = gain
                mid = 0.5 * (x0 + x1)
                best_thr = mid if mid < x1 else x0
        gains[j] = best
        thresholds[j] = best_thr
    return gains, thresholds


@numba.njit(cache=True)
def _scan_variance(XT, srt, y, skip, min_leaf):
    p, n = srt.shape
    gains = np.full(p, -np.inf)
    thresholds = np.zeros(p)
    total = 0.0
    for i in range(n):
        total += y[srt[0, i]]
    base = total * total / n
    for j in range(p):
        if skip[j]:
            continue
        s_left = 0.0
        best = -np.inf
        best_thr = 0.0
        for t in range(n - 1):
            s_left += y[srt[j, t]]
            nl = t + 1
            nr = n - nl
            if nl < min_leaf:
                continue
            if nr < min_leaf:
                break
            x0 = XT[j, srt[j, t]]
            x1 = XT[j, srt[j, t + 1]]
            if not x1 > x0:
                continue
            s_right = total - s_left
            gain = s_left * s_left / nl + s_right * s_right / nr - base
            if gain > best:
                best = gain
                mid = 0.5 * (x0 + x1)
                best_thr = mid if mid < x1 else x0
        gains[j] = best
        thresholds[j] = best_thr
    return gains, thresholds


@numba.njit(cache=True)
def _partition(srt, go_left, n_left):
    """Split per-feature sorted row lists into children, preserving order."""
    p, n = srt.shape
    left = np.empty((p, n_left), dtype=srt.dtype)
    right = np.empty((p, n - n_left), dtype=srt.dtype)
    for j in range(p):
        li = 0
        ri = 0
        for t in range(n):
            r = srt[j, t]
            if go_left[r]:
                left[j, li] = r
                li += 1
            else:
                right[j, ri] = r
                ri += 1
    return left, right


# -- categorical splits -------------------------------------------------------

def _subset_masks(L: int) -> np.ndarray:
    """Candidate left-hand level sets as boolean rows over L present levels."""
    if L <= MAX_EXHAUSTIVE_LEVELS:
        # first level pinned to the left so each partition appears once
        bits = np.arange(2 ** (L - 1) - 1)
        masks = np.zeros((bits.size, L), dtype=bool)
        masks[:, 0] = True
        for b in range(L - 1):
            masks[:, b + 1] = (bits >> b) & 1
        return masks
    return np.eye(L, dtype=bool)


def _categorical_split(codes, y, kind, n_classes, min_leaf, parent):
    levels, inv = np.unique(codes, return_inverse=True)
    L = levels.size
    if L < 2:
        return -np.inf, None
    masks = _subset_masks(L).astype(np.float64)
    n_level = np.bincount(inv, minlength=L).astype(np.float64)
    nl = masks @ n_level
    nr = n_level.sum() - nl
    if kind == "classification":
        counts = np.zeros((L, n_classes))
        np.add.at(counts, (inv, y), 1.0)
        cl = masks @ counts
        cr = counts.sum(axis=0) - cl
        with np.errstate(divide="ignore", invalid="ignore"):
            child = (nl - (cl**2).sum(axis=1) / nl) + (nr - (cr**2).sum(axis=1) / nr)
        gains = parent - child
    else:
        sums = np.bincount(inv, weights=y, minlength=L)
        sl = masks @ sums
        sr = sums.sum() - sl
        total = sums.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = sl**2 / nl + sr**2 / nr - total**2 / (nl + nr)
    ok = (nl >= min_leaf) & (nr >= min_leaf)
    gains = np.where(ok, gains, -np.inf)
    best = int(np.argmax(gains))
    if not np.isfinite(gains[best]):
        return -np.inf, None
    left = frozenset(int(v) for v in levels[masks[best] > 0])
    right = frozenset(int(v) for v in levels[masks[best] == 0])
    return float(gains[best]), (left, right)


# -- fitting ------------------------------------------------------------------

def _node_value(kind, y_node, n_classes):
    if kind == "classification":
        return np.bincount(y_node, minlength=n_classes) / y_node.size
    return float(y_node.mean())


def _node_impurity(kind, y_node, n_classes):
    n = y_node.size
    if kind == "classification":
        c = np.bincount(y_node, minlength=n_classes).astype(np.float64)
        return float(n - (c @ c) / n)
    return float(((y_node - y_node.mean()) ** 2).sum())


def _fit(X, y, kind, n_classes, categorical, cfg: TreeConfig, names=()) -> Tree:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    N, p = X.shape
    if y.shape[0] != N:
        raise ValueError(f"X has {N} rows but y has {y.shape[0]}")
    categorical = (np.zeros(p, dtype=bool) if categorical is None
                   else np.asarray(categorical, dtype=bool))
    if categorical.shape != (p,):
        raise ValueError("categorical flags must have one entry per column")
    if kind == "regression":
        y = np.asarray(y, dtype=np.float64)
    XT = np.ascontiguousarray(X.T)
    root_imp = _node_impurity(kind, y, n_classes)
    min_gain = max(cfg.complexity * root_imp, 0.0)
    tiny = 1e-12 * max(root_imp, 1e-300)
    nodes = [Node(np.arange(N), 0, root_imp, _node_value(kind, y, n_classes))]
    sorted_rows = {0: np.argsort(XT, axis=1, kind="stable").astype(np.int64)}
    go_left_all = np.zeros(N, dtype=np.bool_)
    stack = [0]
    while stack:
        idx = stack.pop()
        node = nodes[idx]
        srt = sorted_rows.pop(idx)
        if (p == 0 or node.depth >= cfg.max_depth or node.n < 2 * cfg.min_leaf
                or node.impurity <= tiny):
            continue
        rows = node.rows
        if kind == "classification":
            gains, thr = _scan_gini(XT, srt, y, n_classes, categorical, cfg.min_leaf)
        else:
            gains, thr = _scan_variance(XT, srt, y, categorical, cfg.min_leaf)
        best_gain, best_j, best_split = -np.inf, -1, None
        for j in range(p):
            if categorical[j]:
                g, split = _categorical_split(XT[j, rows].astype(np.int64), y[rows], kind,
                                              n_classes, cfg.min_leaf, node.impurity)
            else:
                g, split = gains[j], thr[j]
            # strict improvement keeps the lowest feature index on ties
            if g > best_gain + tiny:
                best_gain, best_j, best_split = g, j, split
        if best_j < 0 or not best_gain > tiny or best_gain < min_gain:
            continue
        col = XT[best_j, rows]
        if categorical[best_j]:
            left_levels, right_levels = best_split
            go_left = np.isin(col.astype(np.int64), list(left_levels))
            node.left_levels, node.right_levels = left_levels, right_levels
        else:
            go_left = col <= best_split
            node.threshold = float(best_split)
        node.feature = best_j
        go_left_all[rows] = go_left
        srt_left, srt_right = _partition(srt, go_left_all, int(go_left.sum()))
        go_left_all[rows] = False
        for child_rows, child_srt in ((rows[go_left], srt_left), (rows[~go_left], srt_right)):
            yc = y[child_rows]
            sorted_rows[len(nodes)] = child_srt
            nodes.append(Node(child_rows, node.depth + 1, _node_impurity(kind, yc, n_classes),
                              _node_value(kind, yc, n_classes)))
        node.left, node.right = len(nodes) - 2, len(nodes) - 1
        stack.extend([node.right, node.left])
    return Tree(kind, nodes, categorical, n_classes, y, cfg, tuple(names))


def dataset_matrix(data: Dataset, variables: Sequence[str] | None = None):
    """Raw-variable matrix for tree fitting: numeric values and categorical codes."""
    names = list(variables) if variables is not None else data.names
    X = np.column_stack([data[v].astype(np.float64) for v in names])
    cat = np.array([data.column_schema(v).is_categorical for v in names], dtype=bool)
    return X, cat, names


def fit_classification_tree(X, y, cfg: TreeConfig = TreeConfig(), categorical=None,
                            n_classes: int | None = None, feature_names=()) -> Tree:
    """Gini classification tree. ``y`` holds integer class codes (0/1 for propensity).

    If no split clears ``cfg.complexity`` the tree is a single root leaf.
    """
    y = np.asarray(y)
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.round(y)):
            raise ValueError("classification response must be integer class codes")
        y = y.astype(np.int64)
    y = y.astype(np.int64)
    K = int(n_classes if n_classes is not None else max(int(y.max()) + 1, 2))
    return _fit(X, y, "classification", K, categorical, cfg, feature_names)


def fit_regression_tree(X, y, cfg: TreeConfig = TreeConfig(), categorical=None,
                        feature_names=()) -> Tree:
    """Squared-error regression tree whose leaves keep their training responses as donors."""
    return _fit(X, np.asarray(y, dtype=np.float64), "regression", 0, categorical, cfg,
                feature_names)


def apply(tree: Tree, X) -> np.ndarray:
    """Leaf node index for each row of ``X``.

    A category not seen at a categorical split goes to the child that held
    more training rows.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    out = np.zeros(X.shape[0], dtype=np.int64)
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        idx, rows = stack.pop()
        node = tree.nodes[idx]
        if node.is_leaf or rows.size == 0:
            out[rows] = idx
            continue
        col = X[rows, node.feature]
        if tree.categorical[node.feature]:
            codes = col.astype(np.int64)
            go_left = np.isin(codes, list(node.left_levels))
            unseen = ~go_left & ~np.isin(codes, list(node.right_levels))
            if unseen.any() and tree.nodes[node.left].n > tree.nodes[node.right].n:
                go_left |= unseen
        else:
            go_left = col <= node.threshold
        stack.append((node.left, rows[go_left]))
        stack.append((node.right, rows[~go_left]))
    return out


def predict_proba(tree: Tree, X) -> np.ndarray:
    if tree.kind != "classification":
        raise ValueError("predict_proba needs a classification tree")
    leaves = apply(tree, X)
    table = np.array([np.asarray(nd.value) if nd.is_leaf else np.zeros(tree.n_classes)
                      for nd in tree.nodes])
    return table[leaves]


def predict_scores(tree: Tree, X) -> np.ndarray:
    """Class-1 proportion of each row's leaf (classification) or leaf mean (regression)."""
    leaves = apply(tree, X)
    if tree.kind == "classification":
        table = np.array([nd.value[1] if nd.is_leaf else np.nan for nd in tree.nodes])
    else:
        table = np.array([nd.value if nd.is_leaf else np.nan for nd in tree.nodes])
    return table[leaves]


def training_scores(tree: Tree) -> np.ndarray:
    """Scores of the training rows, read directly from the leaves that hold them."""
    out = np.empty(tree.y.shape[0])
    for nd in tree.leaves:
        out[nd.rows] = nd.value[1] if tree.kind == "classification" else nd.value
    return out


def sample_from_leaf(tree: Tree, row, rng: np.random.Generator):
    """Draw one training response uniformly from the leaf ``row`` falls in."""
    leaf = tree.nodes[int(apply(tree, np.atleast_2d(row))[0])]
    return tree.y[leaf.rows[rng.integers(leaf.n)]]


def sample_leaves(tree: Tree, X, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`sample_from_leaf` over the rows of ``X``."""
    leaves = apply(tree, X)
    u = rng.random(leaves.shape[0])
    out = np.empty(leaves.shape[0], dtype=tree.y.dtype)
    for idx in np.unique(leaves):
        sel = leaves == idx
        donors = tree.nodes[idx].rows
        pick = np.minimum((u[sel] * donors.size).astype(np.int64), donors.size - 1)
        out[sel] = tree.y[donors[pick]]
    return out


def extreme_score_fraction(scores, low: float = 0.05, high: float = 0.95) -> float:
    """Share of propensity scores outside ``[low, high]``; a sign of overfitting."""
    scores = np.asarray(scores)
    return float(np.mean((scores < low) | (scores > high)))
