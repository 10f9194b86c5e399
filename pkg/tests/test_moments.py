import itertools
import math

import numpy as np
import pytest

from conftest import draw_quartet_model, draw_random_model, margins_for
from spectralrg import make_quartet_model, sample
from spectralrg.linalg import NumericError, det_k
from spectralrg.models import LinearTreeModel
from spectralrg.moments import (
    MomentProvider,
    cross_moment,
    empirical_moments,
    mu_from_moments,
    mu_metric,
    node_second_moments,
    population_moments,
)
from spectralrg.trees import LatentTree


def brute_force_discrete_moments(model):
    """Exhaustive joint-distribution enumeration over all node assignments."""
    tree = model.tree
    order = [tree.root]
    i = 0
    while i < len(order):
        order.extend(tree.children(order[i]))
        i += 1
    dims = {v: model.d if tree.is_observed(v) else model.k for v in order}
    moments = {
        (x, y): np.zeros((model.d, model.d))
        for x, y in itertools.combinations(sorted(tree.observed), 2)
    }
    for assign in itertools.product(*[range(dims[v]) for v in order]):
        state = dict(zip(order, assign))
        p = model.root_marginal[state[tree.root]]
        for v in order[1:]:
            p *= model.edge_maps[v][state[v], state[tree.parent[v]]]
        for (x, y), acc in moments.items():
            acc[state[x], state[y]] += p
    return moments


def test_two_leaf_hidden_node_moment_formula():
    tree = LatentTree(observed=("x", "y"), hidden=("h",),
                      edges=(("h", "x"), ("h", "y")), root="h")
    rng = np.random.default_rng(0)
    s = rng.standard_normal((2, 2))
    s = s @ s.T + np.eye(2)
    c1 = rng.standard_normal((3, 2))
    c2 = rng.standard_normal((3, 2))
    model = LinearTreeModel(
        tree=tree, family="gaussian", k=2, d=3, root_moment=s,
        edge_maps={"x": c1, "y": c2}, noise_vars={"x": 0.09, "y": 0.25},
    )
    pop = population_moments(model)
    np.testing.assert_allclose(pop.moment("x", "y"), c1 @ s @ c2.T, atol=1e-12)
    np.testing.assert_allclose(pop.moment("y", "x"), (c1 @ s @ c2.T).T, atol=1e-12)


def test_unit_weight_chain_has_all_unit_moments():
    # three hidden nodes in a chain, unit weights, unit root variance, no noise
    tree = LatentTree(
        observed=("x1", "x2", "x3"),
        hidden=("h1", "h2", "h3"),
        edges=(("h1", "h2"), ("h2", "h3"), ("h1", "x1"), ("h2", "x2"), ("h3", "x3")),
        root="h1",
    )
    one = np.array([[1.0]])
    model = LinearTreeModel(
        tree=tree, family="gaussian", k=1, d=1, root_moment=one,
        edge_maps={v: one for v in ("h2", "h3", "x1", "x2", "x3")},
        noise_vars={v: 0.0 for v in ("h2", "h3", "x1", "x2", "x3")},
    )
    pop = population_moments(model)
    for x, y in itertools.combinations(tree.observed, 2):
        assert pop.moment(x, y)[0, 0] == pytest.approx(1.0, rel=1e-14)


def test_discrete_population_moments_match_enumeration():
    for seed, (k, d) in [(3, (2, 2)), (5, (2, 3)), (11, (3, 3))]:
        model = make_quartet_model("discrete", k=k, d=d, seed=seed,
                                   margins=margins_for("discrete"))
        pop = population_moments(model)
        for (x, y), expected in brute_force_discrete_moments(model).items():
            np.testing.assert_allclose(pop.moment(x, y), expected, atol=1e-12)


def test_rank_deficient_hidden_moment_raises():
    tree = LatentTree(observed=("x", "y", "z"), hidden=("h",),
                      edges=(("h", "x"), ("h", "y"), ("h", "z")), root="h")
    model = LinearTreeModel(
        tree=tree, family="gaussian", k=2, d=2,
        root_moment=np.diag([1.0, 0.0]),
        edge_maps={v: np.eye(2) for v in ("x", "y", "z")},
        noise_vars={v: 0.1 for v in ("x", "y", "z")},
    )
    with pytest.raises(NumericError):
        population_moments(model)


def test_empirical_moments_single_sample_is_outer_product():
    model = draw_random_model(3)
    batch = sample(model, 1, seed=0)
    emp = empirical_moments(batch)
    x, y = batch.leaves[0], batch.leaves[1]
    np.testing.assert_allclose(
        emp.moment(x, y), np.outer(batch.data[x][0], batch.data[y][0]), atol=1e-14
    )


def test_empirical_moments_constant_leaves():
    from spectralrg.models import SampleBatch

    a = np.array([1.0, -2.0])
    b = np.array([0.5, 3.0, 1.0])
    batch = SampleBatch(
        n_samples=10,
        data={"u": np.tile(a, (10, 1)), "w": np.tile(b, (10, 1))},
        seed=0,
    )
    emp = empirical_moments(batch)
    np.testing.assert_allclose(emp.moment("u", "w"), np.outer(a, b), atol=1e-14)
    np.testing.assert_allclose(emp.moment("w", "u"), np.outer(b, a), atol=1e-14)


def test_empirical_error_halves_when_samples_quadruple():
    model = draw_random_model(8)
    pop = population_moments(model)
    x, y = sorted(model.tree.observed)[:2]
    ratios = []
    for seed in range(10):
        errs = []
        for n in (800, 3200):
            emp = empirical_moments(sample(model, n, seed=seed * 101 + n))
            errs.append(np.linalg.norm(emp.moment(x, y) - pop.moment(x, y), 2))
        ratios.append(errs[0] / errs[1])
    mean_ratio = float(np.mean(ratios))
    assert 2.0 / 1.5 <= mean_ratio <= 2.0 * 1.5


def test_provider_transposition_symmetry():
    model = draw_random_model(4)
    prov = MomentProvider.from_population(model)
    x, y = sorted(model.tree.observed)[:2]
    np.testing.assert_allclose(prov.moment(x, y), prov.moment(y, x).T, atol=1e-14)
    np.testing.assert_allclose(prov.singular_values(x, y), prov.singular_values(y, x))


# ---------------------------------------------------------------------------
# mu metric
# ---------------------------------------------------------------------------


def test_mu_diagonal_case():
    val = mu_from_moments(0.5 * np.eye(2), np.eye(2), np.eye(2), 2)
    assert val == pytest.approx(2.0 * math.log(0.5), rel=1e-12)


def test_mu_additivity_along_paths():
    for seed in range(8):
        model = draw_random_model(seed + 100)
        second = node_second_moments(model)
        tree = model.tree
        nodes = tree.nodes
        checked = 0
        for u, v in itertools.combinations(nodes, 2):
            path = tree.path(u, v)
            if len(path) < 3:
                continue
            w = path[len(path) // 2]
            lhs = mu_metric(model, u, v, second)
            rhs = mu_metric(model, u, w, second) + mu_metric(model, w, v, second)
            assert abs(lhs - rhs) <= 1e-8
            checked += 1
        assert checked > 0


def test_mu_between_inner_nodes_matches_determinant_ratio():
    for seed in range(5):
        model = draw_quartet_model(seed)
        pop = population_moments(model)
        k = model.k
        num = det_k(pop.moment("z1", "z3"), k) * det_k(pop.moment("z2", "z4"), k)
        den = det_k(pop.moment("z1", "z2"), k) * det_k(pop.moment("z3", "z4"), k)
        ratio = num / den
        mu_hg = mu_metric(model, "h", "g")
        assert math.exp(2.0 * mu_hg) == pytest.approx(ratio, rel=1e-8)


def test_mu_requires_invertible_second_moment():
    with pytest.raises(NumericError):
        mu_from_moments(np.eye(2), np.diag([1.0, 0.0]), None, 2)
