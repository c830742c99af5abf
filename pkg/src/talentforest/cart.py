"""Binary classification trees over categorical features.

Splits send a subset of one feature's levels to the left child. All
canonical subsets (nonempty, proper, containing level 0) are searched, which
is cheap because features have at most a handful of levels. Split quality is
compared exactly on integer class counts.

Minimising the size-weighted Gini impurity of the children,

    (nL/n) * (1 - sum cL^2 / nL^2) + (nR/n) * (1 - sum cR^2 / nR^2),

is the same as maximising ``sum cL^2 / nL + sum cR^2 / nR``, a ratio of
integers, so candidate splits are ranked by cross-multiplication.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np

from .dataset import Dataset
from .errors import DegenerateDataError, ParameterError, SchemaError


def gini_impurity(class_counts) -> float:
    counts = [int(c) for c in class_counts]
    total = sum(counts)
    if total <= 0:
        raise DegenerateDataError("Gini impurity of an empty node is undefined")
    return 1.0 - sum(c * c for c in counts) / (total * total)


@dataclass(frozen=True)
class SplitSpec:
    feature: int
    left_levels: frozenset[int]
    # size-weighted child impurity; informational, not part of identity
    impurity: float = field(default=float("nan"), compare=False)

    def goes_left(self, level) -> bool:
        return level in self.left_levels


@dataclass(frozen=True)
class Leaf:
    counts: tuple[int, ...]
    predicted: int

    @classmethod
    def from_counts(cls, counts) -> Leaf:
        counts = tuple(int(c) for c in counts)
        # argmax returns the first maximum, i.e. the lowest tied class index
        return cls(counts, int(np.argmax(counts)))

    @property
    def n(self) -> int:
        return sum(self.counts)

    def distribution(self) -> tuple[float, ...]:
        n = self.n
        return tuple(c / n for c in self.counts)


@dataclass(frozen=True)
class Internal:
    split: SplitSpec
    left: TreeNode
    right: TreeNode


TreeNode = Union[Leaf, Internal]


@dataclass(frozen=True)
class TreeParams:
    """``mtry=None`` means every feature is a candidate at every node."""

    min_node_size: int = 1
    mtry: int | None = None
    rng: np.random.Generator | None = None

    def resolved_mtry(self, p: int) -> int:
        if self.min_node_size < 1:
            raise ParameterError("min_node_size must be >= 1")
        if self.mtry is None:
            return p
        if not 1 <= self.mtry <= p:
            raise ParameterError(f"mtry must be in [1, {p}], got {self.mtry}")
        return self.mtry


@lru_cache(maxsize=None)
def canonical_subsets(m: int) -> tuple[tuple[int, ...], ...]:
    """Left-level sets for an ``m``-level feature in lexicographic order."""
    rest = range(1, m)
    subsets = []
    for size in range(0, m - 1):
        for combo in itertools.combinations(rest, size):
            subsets.append((0,) + combo)
    return tuple(sorted(subsets))


def _joint_counts(x: np.ndarray, y: np.ndarray, m: int, k: int) -> np.ndarray:
    return np.bincount(x * k + y, minlength=m * k).reshape(m, k)


def _search(x_cols, y, n_levels, k, candidates, min_child):
    """Core split search on already-gathered columns.

    Returns ``(feature, subset, score_num, score_den)`` or ``None``; the score
    is ``sum cL^2/nL + sum cR^2/nR`` as an exact fraction.
    """
    n = len(y)
    parent = np.bincount(y, minlength=k)
    parent_sq = int((parent * parent).sum())
    # the parent's own score is parent_sq / n; a split must beat it strictly
    best = None
    best_num, best_den = parent_sq, n
    for f in sorted(candidates):
        m = n_levels[f]
        joint = _joint_counts(x_cols[f], y, m, k).tolist()
        level_n = [sum(r) for r in joint]
        for subset in canonical_subsets(m):
            left = [0] * k
            n_left = 0
            for lv in subset:
                row = joint[lv]
                for c in range(k):
                    left[c] += row[c]
                n_left += level_n[lv]
            n_right = n - n_left
            if n_left < min_child or n_right < min_child:
                continue
            sq_left = sum(c * c for c in left)
            sq_right = sum((p - c) * (p - c) for p, c in zip(parent.tolist(), left))
            num = sq_left * n_right + sq_right * n_left
            den = n_left * n_right
            if num * best_den > best_num * den:
                best = (f, subset)
                best_num, best_den = num, den
    if best is None:
        return None
    return best[0], best[1], best_num, best_den


def best_split(data: Dataset, row_indices, candidate_features, min_child: int = 1) -> SplitSpec | None:
    """Gini-optimal split of ``row_indices`` over ``candidate_features``.

    ``row_indices`` may repeat rows (bootstrap multisets count duplicates).
    Returns ``None`` when no split leaves both children with at least
    ``min_child`` rows while strictly lowering impurity. Ties go to the lowest
    feature index, then the lexicographically smallest left-level set.
    """
    rows = np.asarray(row_indices, dtype=np.int64)
    candidates = list(candidate_features)
    if rows.size == 0 or not candidates:
        raise ParameterError("best_split needs nonempty rows and candidate features")
    y = data.require_targets()[rows]
    x_cols = {f: data.rows[rows, f] for f in candidates}
    found = _search(x_cols, y, data.schema.n_levels, data.schema.n_classes, candidates, min_child)
    if found is None:
        return None
    f, subset, num, den = found
    impurity = 1.0 - num / (den * len(rows))
    return SplitSpec(f, frozenset(subset), impurity)


def grow_tree(data: Dataset, row_indices, params: TreeParams | None = None) -> TreeNode:
    """Grow a tree to purity, never pruning.

    A node becomes a leaf when it is pure, holds fewer than
    ``2 * min_node_size`` rows, or no candidate split improves it. At each
    node ``mtry`` candidate features are drawn without replacement from
    ``params.rng``; with ``mtry=None`` all features are used and no
    randomness is consumed.
    """
    params = params or TreeParams()
    p = data.schema.n_features
    mtry = params.resolved_mtry(p)
    rng = params.rng
    if mtry < p and rng is None:
        raise ParameterError("a random stream is required when mtry < p")
    rows = np.asarray(row_indices, dtype=np.int64)
    if rows.size == 0:
        raise ParameterError("cannot grow a tree on zero rows")
    X = data.rows
    Y = data.require_targets()
    n_levels = data.schema.n_levels
    k = data.schema.n_classes
    min_size = params.min_node_size
    all_features = list(range(p))

    def grow(idx: np.ndarray) -> TreeNode:
        y = Y[idx]
        counts = np.bincount(y, minlength=k)
        if len(idx) < 2 * min_size or np.count_nonzero(counts) <= 1:
            return Leaf.from_counts(counts)
        if mtry == p:
            candidates = all_features
        else:
            candidates = rng.choice(p, size=mtry, replace=False).tolist()
        x_cols = {f: X[idx, f] for f in candidates}
        found = _search(x_cols, y, n_levels, k, candidates, min_size)
        if found is None:
            return Leaf.from_counts(counts)
        f, subset, num, den = found
        mask = np.isin(x_cols[f], subset)
        split = SplitSpec(f, frozenset(subset), 1.0 - num / (den * len(idx)))
        return Internal(split, grow(idx[mask]), grow(idx[~mask]))

    return grow(rows)


def _check_record(record, n_levels) -> tuple[int, ...]:
    rec = tuple(int(v) for v in record)
    if len(rec) != len(n_levels):
        raise SchemaError(f"record has {len(rec)} entries, schema has {len(n_levels)}")
    for v, m in zip(rec, n_levels):
        if not 0 <= v < m:
            raise SchemaError(f"level index {v} out of range [0, {m})")
    return rec


def predict_tree(tree: TreeNode, record, n_levels=None) -> tuple[int, tuple[float, ...]]:
    """Route one record; returns the leaf's class and normalized counts.

    Pass ``n_levels`` (the schema's level counts) to validate the record.
    """
    if n_levels is not None:
        record = _check_record(record, n_levels)
    node = tree
    while isinstance(node, Internal):
        level = record[node.split.feature]
        if level < 0:
            raise SchemaError(f"negative level index {level}")
        node = node.left if level in node.split.left_levels else node.right
    return node.predicted, node.distribution()


def predict_tree_batch(tree: TreeNode, X: np.ndarray) -> np.ndarray:
    """Predicted class for every row of ``X`` (no validation)."""
    out = np.empty(len(X), dtype=np.int64)

    def route(node, idx):
        if isinstance(node, Leaf):
            out[idx] = node.predicted
            return
        s = node.split
        mask = np.isin(X[idx, s.feature], tuple(s.left_levels))
        if mask.any():
            route(node.left, idx[mask])
        if not mask.all():
            route(node.right, idx[~mask])

    if len(X):
        route(tree, np.arange(len(X)))
    return out


def subtree_counts(node: TreeNode) -> tuple[int, ...]:
    if isinstance(node, Leaf):
        return node.counts
    left, right = subtree_counts(node.left), subtree_counts(node.right)
    return tuple(a + b for a, b in zip(left, right))


def iter_leaves(node: TreeNode):
    if isinstance(node, Leaf):
        yield node
    else:
        yield from iter_leaves(node.left)
        yield from iter_leaves(node.right)


def iter_internal(node: TreeNode):
    if isinstance(node, Internal):
        yield node
        yield from iter_internal(node.left)
        yield from iter_internal(node.right)


def features_used(node: TreeNode) -> set[int]:
    return {n.split.feature for n in iter_internal(node)}


def depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(depth(node.left), depth(node.right))
