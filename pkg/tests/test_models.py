import numpy as np
import pytest

from conftest import draw_random_model, margins_for
from spectralrg import (
    ConditionMargins,
    attach_parameters,
    check_conditions,
    generate_tree,
    make_quartet_model,
    sample,
)
from spectralrg.linalg import top_singular_values
from spectralrg.models import GenerationError, dump_model, load_model
from spectralrg.trees import LatentTree


def test_gaussian_scalar_edge_weights_meet_floor():
    tree = generate_tree(5, seed=2)
    model = attach_parameters(tree, "gaussian", 1, 1, ConditionMargins(min_sv=0.5), seed=3)
    for v, m in model.edge_maps.items():
        assert abs(m[0, 0]) >= 0.5


def test_discrete_conditionals_are_stochastic_and_full_rank():
    model = make_quartet_model("discrete", k=2, d=3, seed=8, margins=margins_for("discrete"))
    for v, m in model.edge_maps.items():
        np.testing.assert_allclose(m.sum(axis=0), 1.0, atol=1e-12)
        assert np.all(m >= 0)
        assert top_singular_values(m, 2)[-1] > 0.2  # rank 2 by SVD oracle


def test_generated_models_pass_condition_checks():
    for seed in (0, 1, 2, 3):
        model = draw_random_model(seed)
        report = check_conditions(model)
        assert report.all_pass, [c for c in report.checks if not c.passed]


def test_generation_error_when_margins_unreachable():
    tree = generate_tree(4, seed=0)
    with pytest.raises(GenerationError):
        attach_parameters(tree, "gaussian", 2, 3, ConditionMargins(rho_cap=1e-9), seed=0)


def test_rho_cap_must_be_below_one():
    tree = generate_tree(4, seed=0)
    with pytest.raises(ValueError):
        attach_parameters(tree, "gaussian", 1, 1, ConditionMargins(rho_cap=1.2), seed=0)


def test_sampling_is_deterministic():
    model = draw_random_model(5)
    a = sample(model, 50, seed=17)
    b = sample(model, 50, seed=17)
    for leaf in a.leaves:
        np.testing.assert_array_equal(a.data[leaf], b.data[leaf])


def test_discrete_samples_are_coordinate_vectors():
    model = draw_random_model(2)
    if model.family != "discrete":
        model = make_quartet_model("discrete", k=2, d=4, seed=0, margins=margins_for("discrete"))
    batch = sample(model, 200, seed=1)
    for leaf in batch.leaves:
        arr = batch.data[leaf]
        assert set(np.unique(arr)) <= {0.0, 1.0}
        np.testing.assert_array_equal(arr.sum(axis=1), np.ones(200))


def test_gaussian_single_edge_monte_carlo_convergence():
    # permissive two-leaf model: empirical E[xy] within 3 standard errors
    tree = LatentTree(observed=("x", "y"), hidden=("h",),
                      edges=(("h", "x"), ("h", "y")), root="h")
    from spectralrg.models import LinearTreeModel

    model = LinearTreeModel(
        tree=tree, family="gaussian", k=1, d=1,
        root_moment=np.array([[1.0]]),
        edge_maps={"x": np.array([[0.9]]), "y": np.array([[0.8]])},
        noise_vars={"x": 0.04, "y": 0.04},
    )
    n = 10**6
    batch = sample(model, n, seed=11)
    prod = batch.data["x"][:, 0] * batch.data["y"][:, 0]
    se = prod.std(ddof=1) / np.sqrt(n)
    assert abs(prod.mean() - 0.72) <= 3 * se


def test_model_document_round_trip_is_exact():
    model = draw_random_model(7)
    again = load_model(dump_model(model))
    assert again.family == model.family and again.k == model.k and again.d == model.d
    np.testing.assert_array_equal(again.root_moment, model.root_moment)
    for v in model.edge_maps:
        np.testing.assert_array_equal(again.edge_maps[v], model.edge_maps[v])
    assert again.noise_vars == model.noise_vars
    assert again.tree.edges == model.tree.edges
