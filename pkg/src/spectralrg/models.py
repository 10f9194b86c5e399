"""Linear tree models over a latent tree: parameters, generation, sampling.

Every edge carries a conditional-mean map from the parent vector to the
child vector.  In the Gaussian family a child is its map applied to the
parent plus isotropic noise; in the discrete family nodes are coordinate
vectors and the edge maps are column-stochastic conditional probability
tables, so conditional means are linear in both families.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping

import numpy as np

from .linalg import top_singular_values
from .trees import LatentTree, tree_from_document, tree_to_document

__all__ = [
    "ConditionMargins",
    "GenerationError",
    "LinearTreeModel",
    "SampleBatch",
    "attach_parameters",
    "make_quartet_model",
    "make_star_model",
    "model_from_document",
    "model_to_document",
    "sample",
]

GAUSSIAN = "gaussian"
DISCRETE = "discrete"

_RETRY_BUDGET = 300


class GenerationError(RuntimeError):
    """Parameter generation exhausted its retry budget."""


@dataclass(frozen=True)
class ConditionMargins:
    """Margins the generator must certify before accepting parameters."""

    rho_cap: float = 0.9
    min_sv: float = 0.4


@dataclass(frozen=True, eq=False)
class LinearTreeModel:
    tree: LatentTree
    family: str
    k: int
    d: int
    root_moment: np.ndarray
    edge_maps: Mapping[str, np.ndarray]  # child node -> map applied to its parent
    noise_vars: Mapping[str, float] = field(default_factory=dict)  # gaussian only

    def __post_init__(self):
        if self.family not in (GAUSSIAN, DISCRETE):
            raise ValueError(f"unknown family {self.family!r}")
        if self.d < self.k:
            raise ValueError("observed dimension d must be >= hidden dimension k")
        for child in self.tree.nodes:
            if self.tree.parent[child] is None:
                continue
            if child not in self.edge_maps:
                raise ValueError(f"missing edge map for node {child}")

    def node_dim(self, v) -> int:
        return self.d if self.tree.is_observed(v) else self.k

    @property
    def root_marginal(self) -> np.ndarray:
        """Discrete root distribution (diagonal of the root second moment)."""
        if self.family != DISCRETE:
            raise ValueError("root_marginal is defined for discrete models only")
        return np.diag(self.root_moment).copy()


@dataclass(frozen=True)
class SampleBatch:
    """Per-leaf observation arrays, each of shape (n_samples, d)."""

    n_samples: int
    data: Mapping[str, np.ndarray]
    seed: int

    def __post_init__(self):
        for leaf, arr in self.data.items():
            if arr.ndim != 2 or arr.shape[0] != self.n_samples:
                raise ValueError(f"leaf {leaf}: expected ({self.n_samples}, d) array")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"leaf {leaf}: non-finite samples")

    @property
    def leaves(self) -> tuple:
        return tuple(sorted(self.data))


# ---------------------------------------------------------------------------
# Parameter generation
# ---------------------------------------------------------------------------


def _random_orthogonal(rng, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _gaussian_edge_map(rng, rows: int, cols: int, min_sv: float) -> np.ndarray:
    u = _random_orthogonal(rng, rows)[:, :cols]
    v = _random_orthogonal(rng, cols)
    s = rng.uniform(min_sv, 1.0, size=cols)
    return u @ np.diag(s) @ v.T


def _stochastic_square(rng, k: int, min_sv: float) -> np.ndarray:
    for _ in range(50):
        alpha = rng.uniform(0.55, 0.9)
        raw = rng.uniform(0.05, 1.0, size=(k, k))
        m = alpha * np.eye(k) + (1 - alpha) * (raw / raw.sum(axis=0, keepdims=True))
        if top_singular_values(m, k)[-1] >= min_sv:
            return m
    raise GenerationError(f"no rank-{k} stochastic square matrix at min_sv={min_sv}")


def _stochastic_tall(rng, d: int, k: int, min_sv: float) -> np.ndarray:
    # peaked pattern spreads hidden states over distinct observed symbols,
    # which keeps the k-th singular value bounded away from zero
    peaks = rng.permutation(d)[:k]
    pattern = np.zeros((d, k))
    pattern[peaks, np.arange(k)] = 1.0
    for _ in range(50):
        alpha = rng.uniform(0.6, 0.9)
        raw = rng.uniform(0.05, 1.0, size=(d, k))
        m = alpha * pattern + (1 - alpha) * (raw / raw.sum(axis=0, keepdims=True))
        if top_singular_values(m, k)[-1] >= min_sv:
            return m
    raise GenerationError(f"no rank-{k} stochastic {d}x{k} matrix at min_sv={min_sv}")


def _discrete_root(rng, k: int) -> np.ndarray:
    for _ in range(100):
        w = rng.uniform(1.0, 4.0, size=k)
        pi = w / w.sum()
        if pi.min() >= 0.05:
            return pi
    raise GenerationError("could not draw a root marginal bounded away from 0")


def _hidden_pair_rho(model: "LinearTreeModel") -> float:
    # local import: moments depends on models
    from .moments import cross_moment, node_second_moments

    second = node_second_moments(model)
    worst = 0.0
    for h, g in combinations(model.tree.hidden, 2):
        num = np.linalg.det(cross_moment(model, h, g, second)) ** 2
        den = np.linalg.det(second[h]) * np.linalg.det(second[g])
        if den <= 0:
            return math.inf
        worst = max(worst, math.sqrt(max(0.0, num / den)))
    return worst


def attach_parameters(
    tree: LatentTree,
    family: str,
    k: int,
    d: int,
    margins: ConditionMargins | None = None,
    seed=0,
) -> LinearTreeModel:
    """Draw model parameters until the condition margins are certified.

    Rejection-samples whole parameter sets; raises GenerationError once the
    retry budget is exhausted.
    """
    margins = margins or ConditionMargins()
    if margins.rho_cap >= 1:
        raise ValueError("rho_cap must be < 1")
    if d < k:
        raise ValueError("d must be >= k")
    rng = np.random.default_rng(seed)

    last_error = None
    for _ in range(_RETRY_BUDGET):
        try:
            model = _draw_model(rng, tree, family, k, d, margins)
        except GenerationError as exc:
            last_error = exc
            continue
        if _hidden_pair_rho(model) <= margins.rho_cap:
            return model
    raise GenerationError(
        f"no parameter set met margins {margins} within {_RETRY_BUDGET} tries"
        + (f" (last: {last_error})" if last_error else "")
    )


def _draw_model(rng, tree, family, k, d, margins) -> LinearTreeModel:
    edge_maps = {}
    noise_vars = {}
    if family == GAUSSIAN:
        q = _random_orthogonal(rng, k)
        root_moment = q @ np.diag(rng.uniform(0.5, 1.0, size=k)) @ q.T
        for v in tree.nodes:
            if tree.parent[v] is None:
                continue
            rows = d if tree.is_observed(v) else k
            edge_maps[v] = _gaussian_edge_map(rng, rows, k, margins.min_sv)
            noise_vars[v] = float(rng.uniform(0.1, 0.5)) ** 2
    elif family == DISCRETE:
        root_moment = np.diag(_discrete_root(rng, k))
        for v in tree.nodes:
            if tree.parent[v] is None:
                continue
            if tree.is_observed(v):
                edge_maps[v] = _stochastic_tall(rng, d, k, margins.min_sv)
            else:
                edge_maps[v] = _stochastic_square(rng, k, margins.min_sv)
    else:
        raise ValueError(f"unknown family {family!r}")
    return LinearTreeModel(
        tree=tree,
        family=family,
        k=k,
        d=d,
        root_moment=root_moment,
        edge_maps=edge_maps,
        noise_vars=noise_vars,
    )


# ---------------------------------------------------------------------------
# Explicit small-model constructors (used heavily by tests and experiments)
# ---------------------------------------------------------------------------


def make_quartet_model(
    family: str = GAUSSIAN,
    k: int = 1,
    d: int = 1,
    seed=0,
    margins: ConditionMargins | None = None,
) -> LinearTreeModel:
    """Two adjacent hidden nodes, each with two leaves: z1,z2 | z3,z4."""
    tree = LatentTree(
        observed=("z1", "z2", "z3", "z4"),
        hidden=("h", "g"),
        edges=(("h", "z1"), ("h", "z2"), ("h", "g"), ("g", "z3"), ("g", "z4")),
        root="h",
    )
    return attach_parameters(tree, family, k, d, margins, seed)


def make_star_model(
    family: str = GAUSSIAN,
    k: int = 1,
    d: int = 1,
    seed=0,
    margins: ConditionMargins | None = None,
) -> LinearTreeModel:
    """Single hidden node with four leaves (the degenerate quartet)."""
    tree = LatentTree(
        observed=("z1", "z2", "z3", "z4"),
        hidden=("h",),
        edges=(("h", "z1"), ("h", "z2"), ("h", "z3"), ("h", "z4")),
        root="h",
    )
    return attach_parameters(tree, family, k, d, margins, seed)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample(model: LinearTreeModel, n: int, seed=0) -> SampleBatch:
    """Ancestral sampling root-to-leaves; bit-identical for a fixed seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    tree = model.tree
    order = _topological(tree)

    if model.family == GAUSSIAN:
        values = {}
        chol = np.linalg.cholesky(model.root_moment)
        for v in order:
            p = tree.parent[v]
            if p is None:
                values[v] = rng.standard_normal((n, model.k)) @ chol.T
            else:
                m = model.edge_maps[v]
                noise = math.sqrt(model.noise_vars[v]) * rng.standard_normal((n, m.shape[0]))
                values[v] = values[p] @ m.T + noise
        data = {x: values[x] for x in tree.observed}
    else:
        states = {}
        for v in order:
            p = tree.parent[v]
            if p is None:
                states[v] = rng.choice(model.k, size=n, p=model.root_marginal)
            else:
                cum = np.cumsum(model.edge_maps[v], axis=0)
                thresh = cum[:, states[p]]  # (child_states, n)
                u = rng.random(n)
                states[v] = (u[None, :] > thresh).sum(axis=0)
        data = {}
        for x in tree.observed:
            onehot = np.zeros((n, model.d))
            onehot[np.arange(n), states[x]] = 1.0
            data[x] = onehot
    return SampleBatch(n_samples=n, data=data, seed=seed)


def _topological(tree: LatentTree) -> list:
    order = [tree.root]
    i = 0
    while i < len(order):
        order.extend(tree.children(order[i]))
        i += 1
    return order


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def model_to_document(model: LinearTreeModel) -> dict:
    doc = {
        "format": "linear-tree-model",
        "version": 1,
        "tree": tree_to_document(model.tree),
        "family": model.family,
        "k": model.k,
        "d": model.d,
        "root_moment": model.root_moment.tolist(),
        "edge_maps": {v: m.tolist() for v, m in sorted(model.edge_maps.items())},
    }
    if model.family == GAUSSIAN:
        doc["noise_vars"] = {v: s for v, s in sorted(model.noise_vars.items())}
    return doc


def model_from_document(doc: dict) -> LinearTreeModel:
    if doc.get("format") != "linear-tree-model":
        raise ValueError(f"not a linear-tree-model document: format={doc.get('format')!r}")
    return LinearTreeModel(
        tree=tree_from_document(doc["tree"]),
        family=doc["family"],
        k=int(doc["k"]),
        d=int(doc["d"]),
        root_moment=np.asarray(doc["root_moment"], dtype=float),
        edge_maps={v: np.asarray(m, dtype=float) for v, m in doc["edge_maps"].items()},
        noise_vars={v: float(s) for v, s in doc.get("noise_vars", {}).items()},
    )


def dump_model(model: LinearTreeModel) -> str:
    return json.dumps(model_to_document(model), indent=2)


def load_model(text: str) -> LinearTreeModel:
    return model_from_document(json.loads(text))
