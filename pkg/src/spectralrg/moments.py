"""Second-moment computation: exact population values and empirical estimates.

Population cross-moments follow from linear conditional means: for nodes u, v
with least common ancestor a, E[u v^T] equals the path-product map into u,
applied to E[a a^T], times the transposed path-product map into v.  The same
formula serves both families; only the per-node second moments differ
(noise-inflated in the Gaussian case, diagonal marginals in the discrete
case).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping

import numpy as np

from .linalg import NumericError, RANK_RTOL, singular_values, top_singular_values
from .models import DISCRETE, GAUSSIAN, LinearTreeModel, SampleBatch

__all__ = [
    "MomentProvider",
    "PopulationMoments",
    "cross_moment",
    "empirical_moments",
    "mu_from_moments",
    "mu_metric",
    "node_second_moments",
    "population_moments",
]


def _pair(a, b) -> frozenset:
    return frozenset((a, b))


def node_second_moments(model: LinearTreeModel) -> dict:
    """E[v v^T] for every node, propagated from the root."""
    tree = model.tree
    second = {}
    marginals = {}
    order = [tree.root]
    i = 0
    while i < len(order):
        order.extend(tree.children(order[i]))
        i += 1
    for v in order:
        p = tree.parent[v]
        if model.family == DISCRETE:
            if p is None:
                marginals[v] = np.diag(model.root_moment).copy()
            else:
                marginals[v] = model.edge_maps[v] @ marginals[p]
            second[v] = np.diag(marginals[v])
        else:
            if p is None:
                second[v] = model.root_moment.copy()
            else:
                m = model.edge_maps[v]
                second[v] = m @ second[p] @ m.T + model.noise_vars[v] * np.eye(m.shape[0])
        if not tree.is_observed(v):
            sv = singular_values(second[v])
            if sv[-1] < RANK_RTOL * max(sv[0], 1.0):
                raise NumericError(f"second moment of hidden node {v} is rank deficient")
    return second


def _map_to_ancestor(model: LinearTreeModel, v, ancestor) -> np.ndarray:
    """Path product of edge maps such that E[v | a] = M a."""
    node = v
    out = None
    while node != ancestor:
        step = model.edge_maps[node]
        out = step if out is None else out @ step
        node = model.tree.parent[node]
        if node is None and node != ancestor:
            raise ValueError(f"{ancestor} is not an ancestor of {v}")
    return np.eye(model.node_dim(v)) if out is None else out


def cross_moment(model: LinearTreeModel, u, v, second: Mapping | None = None) -> np.ndarray:
    """Exact E[u v^T] for any two distinct nodes."""
    if u == v:
        raise ValueError("u and v must be distinct")
    if second is None:
        second = node_second_moments(model)
    a = model.tree.lca(u, v)
    mu = _map_to_ancestor(model, u, a)
    mv = _map_to_ancestor(model, v, a)
    return mu @ second[a] @ mv.T


@dataclass(frozen=True, eq=False)
class PopulationMoments:
    """Exact pair moments for observed pairs plus all node second moments."""

    pair_moments: Mapping[frozenset, np.ndarray]  # oriented: rows = sorted-first label
    node_second_moments: Mapping[str, np.ndarray]
    labels: tuple

    def moment(self, x, y) -> np.ndarray:
        if x == y:
            return self.node_second_moments[x]
        m = self.pair_moments[_pair(x, y)]
        return m if x < y else m.T


def population_moments(model: LinearTreeModel) -> PopulationMoments:
    second = node_second_moments(model)
    pairs = {}
    for x, y in combinations(sorted(model.tree.observed), 2):
        pairs[_pair(x, y)] = cross_moment(model, x, y, second)
    return PopulationMoments(
        pair_moments=pairs, node_second_moments=second, labels=tuple(sorted(model.tree.observed))
    )


# ---------------------------------------------------------------------------
# Uniform lookup interface used by the reconstruction algorithm
# ---------------------------------------------------------------------------


class MomentProvider:
    """Second-moment lookup for observed pairs with cached singular values."""

    def __init__(self, labels, moment_fn, source: str):
        self.labels = tuple(sorted(labels))
        self._moment_fn = moment_fn
        self.source = source
        self._sv_cache: dict = {}

    def moment(self, x, y) -> np.ndarray:
        return self._moment_fn(x, y)

    def singular_values(self, x, y) -> np.ndarray:
        key = _pair(x, y)
        sv = self._sv_cache.get(key)
        if sv is None:
            sv = singular_values(self._moment_fn(x, y))
            self._sv_cache[key] = sv
        return sv

    def sigma_k(self, x, y, k: int) -> float:
        return float(self.singular_values(x, y)[k - 1])

    @classmethod
    def from_population(cls, model: LinearTreeModel) -> "MomentProvider":
        pop = population_moments(model)
        return cls(pop.labels, pop.moment, source="population")

    @classmethod
    def from_population_moments(cls, pop: PopulationMoments) -> "MomentProvider":
        return cls(pop.labels, pop.moment, source="population")

    @classmethod
    def from_batch(cls, batch: SampleBatch) -> "MomentProvider":
        return empirical_moments(batch)


def empirical_moments(batch: SampleBatch) -> MomentProvider:
    """Plain averages (1/N) sum_n x_n y_n^T for every observed pair."""
    n = batch.n_samples
    cache = {}

    def moment(x, y):
        key = (x, y)
        m = cache.get(key)
        if m is None:
            m = batch.data[x].T @ batch.data[y] / n
            cache[key] = m
            cache[(y, x)] = m.T
        return m

    return MomentProvider(batch.leaves, moment, source="empirical")


# ---------------------------------------------------------------------------
# Additive log-determinant metric between nodes
# ---------------------------------------------------------------------------


def _inv_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    if vals[0] <= RANK_RTOL * max(vals[-1], 1.0):
        raise NumericError("second moment is singular; cannot whiten")
    return vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T


def mu_from_moments(
    cross: np.ndarray,
    left_second: np.ndarray | None,
    right_second: np.ndarray | None,
    k: int,
) -> float:
    """log of the product of the top-k singular values of the (optionally
    whitened) cross-moment; whitening applies on sides with a second moment
    supplied (the hidden endpoints)."""
    m = np.asarray(cross, dtype=float)
    if left_second is not None:
        m = _inv_sqrt(left_second) @ m
    if right_second is not None:
        m = m @ _inv_sqrt(right_second)
    sv = top_singular_values(m, k)
    if sv[-1] <= RANK_RTOL * max(sv[0], 1.0):
        raise NumericError("whitened cross moment has numerical rank < k")
    return float(np.sum(np.log(sv)))


def mu_metric(model: LinearTreeModel, u, v, second: Mapping | None = None) -> float:
    """Additive tree metric between any two distinct nodes.

    Along any root-free path u -> w -> v the values add exactly:
    mu(u, v) = mu(u, w) + mu(w, v).
    """
    if second is None:
        second = node_second_moments(model)
    cross = cross_moment(model, u, v, second)
    left = None if model.tree.is_observed(u) else second[u]
    right = None if model.tree.is_observed(v) else second[v]
    return mu_from_moments(cross, left, right, model.k)
