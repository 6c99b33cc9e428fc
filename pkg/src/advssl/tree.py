"""Depth-limited regression trees with exact greedy split search.

The weak learner behind gradient boosting: each internal node picks the
(feature, threshold) pair with the largest SSE reduction, thresholds are
midpoints between consecutive distinct values, leaves carry target means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (value)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": float(self.value)}
        return {
            "feature": int(self.feature),
            "threshold": float(self.threshold),
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "value" in d:
            return cls(value=float(d["value"]))
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


@dataclass
class RegressionTree:
    root: TreeNode
    max_depth: int
    min_leaf_count: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Leaf value per row; rows go left when value <= threshold."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        out = np.empty(x.shape[0])
        self._fill(self.root, x, np.arange(x.shape[0]), out)
        return out

    def _fill(self, node: TreeNode, x: np.ndarray, idx: np.ndarray, out: np.ndarray):
        if node.is_leaf:
            out[idx] = node.value
            return
        go_left = x[idx, node.feature] <= node.threshold
        self._fill(node.left, x, idx[go_left], out)
        self._fill(node.right, x, idx[~go_left], out)

    def depth(self) -> int:
        def _d(node):
            return 0 if node.is_leaf else 1 + max(_d(node.left), _d(node.right))

        return _d(self.root)

    def to_dict(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "min_leaf_count": self.min_leaf_count,
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            root=TreeNode.from_dict(d["root"]),
            max_depth=int(d["max_depth"]),
            min_leaf_count=int(d["min_leaf_count"]),
        )


def best_split(
    x: np.ndarray, targets: np.ndarray, min_leaf_count: int
) -> tuple[float, int, float] | None:
    """Best (gain, feature, threshold) over all exact splits, or None.

    Gain is the SSE reduction sum_L^2/n_L + sum_R^2/n_R - sum^2/n. Ties go
    to the lowest feature index, then to the smallest threshold.
    """
    n = targets.shape[0]
    best: tuple[float, int, float] | None = None
    total = targets.sum()
    parent_term = total * total / n
    for feat in range(x.shape[1]):
        col = x[:, feat]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        ys = targets[order]
        prefix = np.cumsum(ys)
        sizes = np.arange(1, n)  # candidate left-side sizes
        distinct = xs[1:] != xs[:-1]
        valid = distinct & (sizes >= min_leaf_count) & (n - sizes >= min_leaf_count)
        if not valid.any():
            continue
        left_sum = prefix[:-1]
        gains = (
            left_sum * left_sum / sizes
            + (total - left_sum) * (total - left_sum) / (n - sizes)
            - parent_term
        )
        gains = np.where(valid, gains, -np.inf)
        i = int(np.argmax(gains))  # first max -> smallest threshold wins ties
        gain = float(gains[i])
        if best is None or gain > best[0]:
            threshold = float((xs[i] + xs[i + 1]) / 2.0)
            best = (gain, feat, threshold)
    if best is None or best[0] <= 0.0:
        return None
    return best


def fit_regression_tree(
    x: np.ndarray, targets: np.ndarray, max_depth: int, min_leaf_count: int = 1
) -> RegressionTree:
    """Greedy exact least-squares tree.

    Stops on depth, on leaves that cannot keep min_leaf_count rows per
    side, on constant targets, and on zero SSE gain.
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if x.shape[0] != targets.shape[0]:
        raise ValueError(
            f"row count {x.shape[0]} does not match target count {targets.shape[0]}"
        )
    if min_leaf_count < 1:
        raise ValueError("min_leaf_count must be >= 1")

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        ys = targets[idx]
        leaf = TreeNode(value=float(ys.mean()))
        if depth >= max_depth or idx.shape[0] < 2 * min_leaf_count:
            return leaf
        if ys.min() == ys.max():  # constant targets: exact single leaf
            return leaf
        found = best_split(x[idx], ys, min_leaf_count)
        if found is None:
            return leaf
        _, feat, threshold = found
        go_left = x[idx, feat] <= threshold
        return TreeNode(
            feature=feat,
            threshold=threshold,
            left=build(idx[go_left], depth + 1),
            right=build(idx[~go_left], depth + 1),
        )

    root = build(np.arange(x.shape[0]), 0)
    return RegressionTree(root=root, max_depth=max_depth, min_leaf_count=min_leaf_count)
