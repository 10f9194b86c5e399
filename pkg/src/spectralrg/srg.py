"""Bottom-up tree reconstruction from pairwise second moments.

The working set holds roots of disjoint reconstructed subtrees.  Each
iteration picks the mergeable pair with the strongest observed correlation,
asks whether the two roots are siblings or parent/child, and combines them.
Quartet tests only ever rule combinations out, so an abstaining test never
corrupts the reconstruction; with exact moments and zero widths the learned
tree matches the true undirected structure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Mapping

from .moments import MomentProvider
from .quartet import Pairing, pairing_from_singular_values
from .trees import LatentTree

__all__ = [
    "DefectError",
    "QuartetTester",
    "Relationship",
    "SRGResult",
    "ThresholdTable",
    "mergeable",
    "relationship",
    "spectral_recursive_grouping",
]

log = logging.getLogger(__name__)


class DefectError(RuntimeError):
    """A loop invariant failed; indicates an internal bug, not bad input."""


@dataclass(frozen=True)
class ThresholdTable:
    """Per-pair confidence widths consumed by the quartet tests."""

    widths: Mapping[frozenset, float]
    mode: str = "fixed"
    metadata: Mapping | None = None

    def width(self, x, y) -> float:
        return self.widths[frozenset((x, y))]

    def validate(self, labels) -> None:
        for x, y in combinations(sorted(labels), 2):
            w = self.widths.get(frozenset((x, y)))
            if w is None:
                raise ValueError(f"missing threshold width for pair ({x}, {y})")
            if w < 0:
                raise ValueError(f"negative threshold width for pair ({x}, {y})")

    @classmethod
    def uniform(cls, labels, value: float, mode: str = "global_uniform") -> "ThresholdTable":
        widths = {frozenset(p): float(value) for p in combinations(sorted(labels), 2)}
        return cls(widths=widths, mode=mode)


class QuartetTester:
    """Memoized quartet tests against fixed moments and widths.

    Verdicts depend only on the unordered 4-set because the moments and
    widths are global, so a dict keyed by the frozen 4-set is sound.
    """

    def __init__(self, moments: MomentProvider, thresholds: ThresholdTable, k: int, memoize=True):
        self.moments = moments
        self.thresholds = thresholds
        self.k = k
        self.memoize = memoize
        self.tests_run = 0
        self.cache_hits = 0
        self._cache: dict = {}

    def test(self, labels) -> Pairing | None:
        labels = tuple(sorted(labels))
        key = frozenset(labels)
        if self.memoize and key in self._cache:
            self.cache_hits += 1
            return self._cache[key]
        sv = {}
        delta = {}
        for a, b in combinations(labels, 2):
            pair = frozenset((a, b))
            sv[pair] = self.moments.singular_values(a, b)[: self.k]
            delta[pair] = self.thresholds.width(a, b)
        verdict = pairing_from_singular_values(labels, sv, delta, self.k)
        self.tests_run += 1
        if self.memoize:
            self._cache[key] = verdict
        return verdict

    def separates(self, x, y, w, z) -> bool:
        """True when the test on {x, y, w, z} pairs x away from y."""
        verdict = self.test((x, y, w, z))
        return verdict is not None and verdict.separates(x, y)


@dataclass
class ReconstructionState:
    """Working set plus rooted subtrees and leaf sets for every node built."""

    working: set
    children: dict  # node -> tuple of children in its rooted subtree
    leaf_sets: dict  # node -> frozenset of observed leaves under it
    next_hidden_id: int = 1
    split_witnesses: list = field(default_factory=list)

    @classmethod
    def initial(cls, leaves) -> "ReconstructionState":
        return cls(
            working=set(leaves),
            children={x: () for x in leaves},
            leaf_sets={x: frozenset((x,)) for x in leaves},
        )

    def subtree_nodes(self, u) -> set:
        out, stack = set(), [u]
        while stack:
            v = stack.pop()
            out.add(v)
            stack.extend(self.children[v])
        return out


def _find_split_witness(r_set, leaf_sets, u, v, tester: QuartetTester):
    """First quartet pairing some leaf of u away from some leaf of v, if any."""
    others = sorted(r_set - {u, v})
    for u1, v1 in combinations(others, 2):
        for x, y in product(sorted(leaf_sets[u]), sorted(leaf_sets[v])):
            for x1, y1 in product(sorted(leaf_sets[u1]), sorted(leaf_sets[v1])):
                if tester.separates(x, y, x1, y1):
                    return (x, y, x1, y1)
    return None


def mergeable(r_set, leaf_sets, u, v, tester: QuartetTester) -> bool:
    """False iff some quartet across two other components splits u from v.

    With fewer than four components there is no eligible quartet, so the
    answer is vacuously true.
    """
    return _find_split_witness(r_set, leaf_sets, u, v, tester) is None


class Relationship:
    SIBLINGS = "siblings"
    U_PARENT_OF_V = "u_parent_of_v"
    V_PARENT_OF_U = "v_parent_of_u"


def relationship(state: ReconstructionState, u, v, tester: QuartetTester, observed) -> str:
    """Decide siblings vs parent/child for a mergeable pair of roots.

    A root cannot be a parent if it is a leaf, or if splitting it into its
    children exposes a child that may not be merged with the other root.
    """
    u_not_parent = u in observed
    v_not_parent = v in observed

    if not u_not_parent:
        r_u = (state.working - {u}) | set(state.children[u])
        for u1 in sorted(state.children[u]):
            if not mergeable(r_u, state.leaf_sets, u1, v, tester):
                u_not_parent = True
                break
    if not v_not_parent:
        r_v = (state.working - {v}) | set(state.children[v])
        for v1 in sorted(state.children[v]):
            if not mergeable(r_v, state.leaf_sets, u, v1, tester):
                v_not_parent = True
                break

    if u_not_parent and v_not_parent:
        return Relationship.SIBLINGS
    if u_not_parent:
        return Relationship.V_PARENT_OF_U
    if not v_not_parent:
        # neither direction was refuted; either orientation yields the same
        # undirected edge, so keep the first root as the parent
        log.warning("relationship(%s, %s): neither parenthood refuted; defaulting", u, v)
    return Relationship.U_PARENT_OF_V


@dataclass(frozen=True)
class SRGResult:
    tree: LatentTree | None
    failed: bool
    iterations: int
    quartet_tests_run: int
    quartet_cache_hits: int
    split_witnesses: tuple

    @property
    def succeeded(self) -> bool:
        return not self.failed


def _fresh_hidden_name(state: ReconstructionState, taken) -> str:
    while True:
        name = f"v{state.next_hidden_id}"
        state.next_hidden_id += 1
        if name not in taken:
            return name


def _best_pair_key(state, moments, k, u, v):
    """(-best sigma_k, witnessing leaf pair, root pair) for selection order."""
    best = -math.inf
    best_leafpair = None
    for x, y in product(sorted(state.leaf_sets[u]), sorted(state.leaf_sets[v])):
        s = moments.sigma_k(x, y, k)
        pair = tuple(sorted((x, y)))
        if s > best or (s == best and pair < best_leafpair):
            best, best_leafpair = s, pair
    return best, best_leafpair, tuple(sorted((u, v)))


def _check_invariants(state: ReconstructionState, observed) -> None:
    seen_nodes: set = set()
    seen_leaves: set = set()
    for u in state.working:
        nodes = state.subtree_nodes(u)
        if nodes & seen_nodes:
            raise DefectError(f"subtrees overlap at {sorted(nodes & seen_nodes)}")
        seen_nodes |= nodes
        if state.leaf_sets[u] & seen_leaves:
            raise DefectError("leaf sets are not disjoint")
        seen_leaves |= state.leaf_sets[u]
    if seen_leaves != set(observed):
        raise DefectError("leaf sets do not partition the observed variables")


def spectral_recursive_grouping(
    moments: MomentProvider,
    thresholds: ThresholdTable,
    leaves,
    k: int,
    debug_checks: bool = True,
    min_correlation: float | None = None,
    memoize: bool = True,
) -> SRGResult:
    """Reconstruct the latent tree over ``leaves``; never raises on failure.

    ``min_correlation`` optionally restricts candidate pairs to those whose
    best observed sigma_k meets the floor (off by default: the base
    algorithm considers every mergeable pair).
    """
    leaves = tuple(sorted(leaves))
    if len(leaves) < 3:
        raise ValueError("need at least 3 leaves")
    thresholds.validate(leaves)
    tester = QuartetTester(moments, thresholds, k, memoize=memoize)
    state = ReconstructionState.initial(leaves)
    observed = frozenset(leaves)
    iterations = 0

    while len(state.working) > 1:
        candidates = []
        for u, v in combinations(sorted(state.working), 2):
            best, leafpair, rootpair = _best_pair_key(state, moments, k, u, v)
            if min_correlation is not None and best < min_correlation:
                continue
            candidates.append((-best, leafpair, rootpair, u, v))
        candidates.sort()

        chosen = None
        for _, _, _, u, v in candidates:
            witness = _find_split_witness(state.working, state.leaf_sets, u, v, tester)
            if witness is None:
                chosen = (u, v)
                break
            state.split_witnesses.append((iterations, u, v) + witness)
        if chosen is None:
            return SRGResult(
                tree=None,
                failed=True,
                iterations=iterations,
                quartet_tests_run=tester.tests_run,
                quartet_cache_hits=tester.cache_hits,
                split_witnesses=tuple(state.split_witnesses),
            )

        u, v = chosen
        rel = relationship(state, u, v, tester, observed)
        if rel == Relationship.SIBLINGS:
            h = _fresh_hidden_name(state, observed | set(state.children))
            state.children[h] = (u, v)
            state.leaf_sets[h] = state.leaf_sets[u] | state.leaf_sets[v]
            state.working -= {u, v}
            state.working.add(h)
        elif rel == Relationship.U_PARENT_OF_V:
            state.children[u] = state.children[u] + (v,)
            state.leaf_sets[u] = state.leaf_sets[u] | state.leaf_sets[v]
            state.working.discard(v)
        else:
            state.children[v] = state.children[v] + (u,)
            state.leaf_sets[v] = state.leaf_sets[v] | state.leaf_sets[u]
            state.working.discard(u)

        iterations += 1
        if debug_checks:
            _check_invariants(state, observed)

    root = next(iter(state.working))
    nodes = state.subtree_nodes(root)
    edges = tuple((p, c) for p in nodes for c in state.children[p])
    tree = LatentTree(
        observed=tuple(x for x in leaves if x in nodes),
        hidden=tuple(sorted(n for n in nodes if n not in observed)),
        edges=edges,
        root=root,
    )
    return SRGResult(
        tree=tree,
        failed=False,
        iterations=iterations,
        quartet_tests_run=tester.tests_run,
        quartet_cache_hits=tester.cache_hits,
        split_witnesses=tuple(state.split_witnesses),
    )
