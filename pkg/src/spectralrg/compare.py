"""Leaf-labeled tree comparison via induced bipartitions."""

from __future__ import annotations

from dataclasses import dataclass

from .trees import LatentTree

__all__ = ["LabelMismatchError", "TreeComparison", "compare_trees", "leaf_bipartitions"]


class LabelMismatchError(ValueError):
    """The two trees do not share the same observed leaf set."""


def leaf_bipartitions(tree: LatentTree) -> frozenset:
    """Nontrivial leaf splits, one per internal edge.

    Each edge whose removal leaves at least two observed leaves on both
    sides contributes the unordered pair of leaf sets.
    """
    leaves = frozenset(tree.observed)
    splits = set()
    for a, b in tree.edges:
        child = b if tree.parent.get(b) == a else a
        below = set()
        stack = [child]
        while stack:
            v = stack.pop()
            if v in leaves:
                below.add(v)
            stack.extend(tree.children(v))
        side = frozenset(below)
        other = leaves - side
        if len(side) >= 2 and len(other) >= 2:
            splits.add(frozenset((side, other)))
    return frozenset(splits)


@dataclass(frozen=True)
class TreeComparison:
    isomorphic: bool
    rf_distance: int


def compare_trees(a: LatentTree, b: LatentTree) -> TreeComparison:
    """Undirected leaf-labeled equality and symmetric bipartition distance.

    Hidden labels are ignored; two trees are isomorphic exactly when their
    nontrivial leaf bipartition sets coincide.
    """
    if frozenset(a.observed) != frozenset(b.observed):
        raise LabelMismatchError(
            f"leaf sets differ: {sorted(a.observed)} vs {sorted(b.observed)}"
        )
    sa, sb = leaf_bipartitions(a), leaf_bipartitions(b)
    return TreeComparison(isomorphic=sa == sb, rf_distance=len(sa ^ sb))
