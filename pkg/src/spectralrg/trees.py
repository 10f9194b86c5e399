"""Leaf-labeled trees with hidden internal nodes.

A LatentTree stores the undirected structure plus a designated root that
gives edge directions.  Construction is permissive so that deliberately
malformed trees can be built for condition checking; ``structural_problems``
reports violations and ``validate`` raises on them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "InfeasibleTreeError",
    "LatentTree",
    "generate_tree",
    "to_newick",
    "tree_from_document",
    "tree_to_document",
]


class InfeasibleTreeError(ValueError):
    """The requested tree shape cannot satisfy the structural constraints."""


def _canonical_edges(edges):
    return tuple(sorted(tuple(sorted(e)) for e in edges))


@dataclass(frozen=True, eq=False)
class LatentTree:
    observed: tuple
    hidden: tuple
    edges: tuple
    root: str

    def __post_init__(self):
        object.__setattr__(self, "observed", tuple(self.observed))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "edges", _canonical_edges(self.edges))
        names = set(self.observed) | set(self.hidden)
        if len(names) != len(self.observed) + len(self.hidden):
            raise ValueError("node names must be unique across observed and hidden")
        if self.root not in names:
            raise ValueError(f"root {self.root!r} is not a node")
        for a, b in self.edges:
            if a not in names or b not in names:
                raise ValueError(f"edge ({a}, {b}) references unknown node")

    @cached_property
    def nodes(self) -> tuple:
        return tuple(self.observed) + tuple(self.hidden)

    @cached_property
    def adjacency(self) -> dict:
        adj = {v: [] for v in self.nodes}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return {v: tuple(sorted(ns)) for v, ns in adj.items()}

    @cached_property
    def parent(self) -> dict:
        """Parent map induced by the root (root maps to None)."""
        parent = {self.root: None}
        stack = [self.root]
        while stack:
            v = stack.pop()
            for w in self.adjacency[v]:
                if w not in parent:
                    parent[w] = v
                    stack.append(w)
        return parent

    @cached_property
    def depth(self) -> dict:
        depth = {self.root: 0}
        stack = [self.root]
        while stack:
            v = stack.pop()
            for w in self.adjacency[v]:
                if w not in depth:
                    depth[w] = depth[v] + 1
                    stack.append(w)
        return depth

    def children(self, v) -> tuple:
        return tuple(w for w in self.adjacency[v] if self.parent.get(w) == v)

    def degree(self, v) -> int:
        return len(self.adjacency[v])

    def is_observed(self, v) -> bool:
        return v in self._observed_set

    @cached_property
    def _observed_set(self) -> frozenset:
        return frozenset(self.observed)

    def lca(self, u, v) -> str:
        a, b = u, v
        da, db = self.depth[a], self.depth[b]
        while da > db:
            a = self.parent[a]
            da -= 1
        while db > da:
            b = self.parent[b]
            db -= 1
        while a != b:
            a = self.parent[a]
            b = self.parent[b]
        return a

    def path(self, u, v) -> tuple:
        """Node sequence along the undirected path from u to v, inclusive."""
        a = self.lca(u, v)
        up = [u]
        while up[-1] != a:
            up.append(self.parent[up[-1]])
        down = [v]
        while down[-1] != a:
            down.append(self.parent[down[-1]])
        return tuple(up + down[-2::-1])

    def structural_problems(self) -> list:
        """Violations of the latent-tree shape requirements, as messages."""
        problems = []
        n_nodes = len(self.nodes)
        if len(self.edges) != n_nodes - 1:
            problems.append(f"{len(self.edges)} edges for {n_nodes} nodes (not a tree)")
        if len(self.parent) != n_nodes:
            problems.append("graph is not connected")
        if not problems:
            for x in self.observed:
                if self.degree(x) != 1:
                    problems.append(f"observed node {x} has degree {self.degree(x)} != 1")
                elif self.adjacency[x][0] in self._observed_set:
                    problems.append(f"observed node {x} is adjacent to an observed node")
            for h in self.hidden:
                if self.degree(h) < 3:
                    problems.append(f"hidden node {h} has degree {self.degree(h)} < 3")
        return problems

    def validate(self) -> "LatentTree":
        problems = self.structural_problems()
        if problems:
            raise InfeasibleTreeError("; ".join(problems))
        return self


def generate_tree(n_leaves: int, max_hidden_degree: int = 8, seed=0) -> LatentTree:
    """Random latent tree on ``n_leaves`` observed nodes, deterministic per seed.

    Every hidden node ends with degree in [3, max_hidden_degree]; leaves
    attach only to hidden nodes.
    """
    if n_leaves < 3:
        raise InfeasibleTreeError("need at least 3 leaves")
    if max_hidden_degree < 3:
        raise InfeasibleTreeError("max_hidden_degree must be at least 3")
    rng = np.random.default_rng(seed)

    for _ in range(200):
        m = int(rng.integers(1, n_leaves - 1))  # hidden node count in [1, n-2]
        hidden = [f"h{i + 1}" for i in range(m)]
        hidden_deg = {h: 0 for h in hidden}
        edges = []
        for i in range(1, m):
            candidates = [h for h in hidden[:i] if hidden_deg[h] < max_hidden_degree - 1]
            if not candidates:
                break
            p = candidates[int(rng.integers(len(candidates)))]
            edges.append((p, hidden[i]))
            hidden_deg[p] += 1
            hidden_deg[hidden[i]] += 1
        else:
            deficit = {h: max(0, 3 - hidden_deg[h]) for h in hidden}
            spare = {h: max_hidden_degree - hidden_deg[h] for h in hidden}
            need = sum(deficit.values())
            room = sum(spare.values())
            if need <= n_leaves <= room:
                hosts = []
                for h in hidden:
                    hosts.extend([h] * deficit[h])
                    spare[h] -= deficit[h]
                extra = n_leaves - need
                pool = [h for h in hidden for _ in range(spare[h])]
                if extra > 0:
                    picks = rng.choice(len(pool), size=extra, replace=False)
                    hosts.extend(pool[i] for i in picks)
                leaves = [f"x{i + 1}" for i in range(n_leaves)]
                for leaf, host in zip(leaves, hosts):
                    edges.append((host, leaf))
                tree = LatentTree(
                    observed=tuple(leaves), hidden=tuple(hidden), edges=tuple(edges), root="h1"
                )
                if not tree.structural_problems():
                    return tree
    raise InfeasibleTreeError(
        f"could not generate a valid tree with n_leaves={n_leaves}, "
        f"max_hidden_degree={max_hidden_degree}"
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def tree_to_document(tree: LatentTree) -> dict:
    return {
        "format": "latent-tree",
        "version": 1,
        "root": tree.root,
        "observed": list(tree.observed),
        "hidden": list(tree.hidden),
        "edges": [list(e) for e in tree.edges],
    }


def tree_from_document(doc: dict) -> LatentTree:
    if doc.get("format") != "latent-tree":
        raise ValueError(f"not a latent-tree document: format={doc.get('format')!r}")
    return LatentTree(
        observed=tuple(doc["observed"]),
        hidden=tuple(doc["hidden"]),
        edges=tuple(tuple(e) for e in doc["edges"]),
        root=doc["root"],
    )


def to_newick(tree: LatentTree) -> str:
    """Parenthesized leaf-labeled form rooted at the tree root."""

    def render(v) -> str:
        kids = tree.children(v)
        if not kids:
            return str(v)
        return "(" + ",".join(render(c) for c in kids) + ")" + str(v)

    return render(tree.root) + ";"


def dump_tree(tree: LatentTree) -> str:
    return json.dumps(tree_to_document(tree), indent=2)


def load_tree(text: str) -> LatentTree:
    return tree_from_document(json.loads(text))
