"""Shared model factories for the test suite."""

import numpy as np

from spectralrg import ConditionMargins, attach_parameters, generate_tree, make_quartet_model
from spectralrg.trees import LatentTree


def margins_for(family: str) -> ConditionMargins:
    # discrete column-stochastic maps cannot reach the singular-value floors
    # a Gaussian orthogonal-times-diagonal draw supports
    return ConditionMargins(rho_cap=0.9, min_sv=0.4 if family == "gaussian" else 0.22)


def draw_random_model(seed: int):
    """Random valid model: both families, n in [5,12], k in {1,2,3}, d in [k,6].

    The discrete family needs k >= 2: a one-state hidden variable is fully
    redundant (rho = 1), so no discrete k=1 model can satisfy the
    non-redundancy condition.
    """
    rng = np.random.default_rng(seed)
    family = "gaussian" if rng.random() < 0.5 else "discrete"
    n = int(rng.integers(5, 13))
    k = int(rng.integers(1, 4)) if family == "gaussian" else int(rng.integers(2, 4))
    d = int(rng.integers(k, 7))
    tree = generate_tree(n, max_hidden_degree=6, seed=seed)
    return attach_parameters(tree, family, k, d, margins_for(family), seed=seed + 1)


def draw_quartet_model(seed: int):
    rng = np.random.default_rng(seed)
    family = "gaussian" if rng.random() < 0.5 else "discrete"
    k = int(rng.integers(1, 4)) if family == "gaussian" else int(rng.integers(2, 4))
    d = int(rng.integers(k, 6))
    return make_quartet_model(family, k=k, d=d, seed=seed + 1, margins=margins_for(family))


def caterpillar_model(a: float = 0.6, c: float = 0.95):
    """Fixed 8-leaf scalar Gaussian chain of four hidden hubs, two leaves each.

    Unit stationary variances: every node has second moment 1, hub-to-hub
    attenuation ``a``, hub-to-leaf attenuation ``c``.
    """
    from spectralrg.models import LinearTreeModel

    edges = [
        ("h1", "h2"), ("h2", "h3"), ("h3", "h4"),
        ("h1", "x1"), ("h1", "x2"), ("h2", "x3"), ("h2", "x4"),
        ("h3", "x5"), ("h3", "x6"), ("h4", "x7"), ("h4", "x8"),
    ]
    tree = LatentTree(
        observed=tuple(f"x{i}" for i in range(1, 9)),
        hidden=("h1", "h2", "h3", "h4"),
        edges=tuple(edges),
        root="h1",
    ).validate()
    maps, noise = {}, {}
    for _, child in edges:
        w = a if child.startswith("h") else c
        maps[child] = np.array([[w]])
        noise[child] = 1.0 - w * w
    return LinearTreeModel(
        tree=tree, family="gaussian", k=1, d=1,
        root_moment=np.array([[1.0]]), edge_maps=maps, noise_vars=noise,
    )
