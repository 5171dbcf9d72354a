"""Depth-limited regression trees fitted by exact greedy gain search.

Each node scans every feature for the boundary split maximizing

    gain = G_L^2/H_L + G_R^2/H_R - G^2/H

over midpoints between consecutive distinct sorted values, where G and H
are the node's gradient and Hessian sums. Leaf weights are -G/H. Depth
counts edges from the root, so max_depth=1 is a stump. Rows with
x[feature] <= threshold go left.

The per-column scan is the hot loop; a compiled extension is used when
available, with a numpy fallback selected at import time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

try:
    from . import _split_scan as _scan

    HAS_COMPILED_SCAN = True
except ImportError:  # pragma: no cover - depends on the build environment
    from . import _split_scan_py as _scan

    HAS_COMPILED_SCAN = False


def split_backend_name() -> str:
    return "compiled" if HAS_COMPILED_SCAN else "numpy"


@dataclass
class TreeNode:
    weight: float
    n_samples: int
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class Tree:
    """Binary axis-aligned partition with one weight per leaf."""

    root: TreeNode
    max_depth: int
    n_features: int

    def n_leaves(self) -> int:
        def count(node):
            if node.is_leaf:
                return 1
            return count(node.left) + count(node.right)

        return count(self.root)

    def depth(self) -> int:
        def down(node):
            if node.is_leaf:
                return 0
            return 1 + max(down(node.left), down(node.right))

        return down(self.root)


def fit_tree(
    features: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    max_depth: int,
    min_samples_leaf: int = 1,
    scan=None,
) -> Tree:
    """Grow a tree greedily on one gradient/Hessian column.

    Splits need strictly positive gain; nodes violating the depth or leaf
    size constraints become leaves. Ties prefer the lowest feature index,
    then the smallest threshold.
    """
    best_split = scan.best_split if scan is not None else _scan.best_split
    x = np.ascontiguousarray(features, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("fit_tree needs a non-empty feature matrix")
    n, p = x.shape
    if g.shape != (n,) or h.shape != (n,):
        raise DataError("gradient/Hessian length mismatch")
    if np.any(h < 0):
        raise DataError("negative Hessian entries")
    if not np.any(h > 0):
        raise DataError("all-zero Hessian column")
    if max_depth < 0 or min_samples_leaf < 1:
        raise DataError("invalid tree constraints")

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        gs = g[idx]
        hs = h[idx]
        total_h = float(np.sum(hs))
        weight = -float(np.sum(gs)) / total_h if total_h > 0 else 0.0
        if depth < max_depth and idx.size >= 2 * min_samples_leaf:
            best_gain = -np.inf
            best_feature = -1
            best_thr = np.nan
            for j in range(p):
                col = x[idx, j]
                order = np.argsort(col, kind="stable")
                pos, gain, thr = best_split(
                    np.ascontiguousarray(col[order]),
                    np.ascontiguousarray(gs[order]),
                    np.ascontiguousarray(hs[order]),
                    min_samples_leaf,
                )
                if pos >= 0 and gain > best_gain:
                    best_gain, best_feature, best_thr = gain, j, thr
            if best_gain > 0.0:
                mask = x[idx, best_feature] <= best_thr
                return TreeNode(
                    weight,
                    idx.size,
                    best_feature,
                    best_thr,
                    grow(idx[mask], depth + 1),
                    grow(idx[~mask], depth + 1),
                )
        return TreeNode(weight, idx.size)

    return Tree(grow(np.arange(n), 0), max_depth, p)


def predict_tree(tree: Tree, x: np.ndarray) -> float:
    """Weight of the unique leaf containing x."""
    x = np.asarray(x, dtype=np.float64)
    node = tree.root
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.weight


def predict_tree_batch(tree: Tree, features: np.ndarray) -> np.ndarray:
    """Vectorized leaf lookup for a feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    out = np.empty(x.shape[0])
    stack = [(tree.root, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.weight
        else:
            mask = x[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[mask]))
            stack.append((node.right, idx[~mask]))
    return out
