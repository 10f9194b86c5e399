import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectralrg.trees import (
    InfeasibleTreeError,
    LatentTree,
    generate_tree,
    load_tree,
    dump_tree,
    to_newick,
)


def test_three_leaves_has_unique_shape():
    tree = generate_tree(3, seed=0)
    assert len(tree.hidden) == 1
    assert len(tree.observed) == 3
    assert tree.degree(tree.hidden[0]) == 3


def test_four_leaves_is_one_of_two_shapes():
    seen = set()
    for seed in range(30):
        tree = generate_tree(4, seed=seed)
        assert not tree.structural_problems()
        seen.add(len(tree.hidden))
    assert seen <= {1, 2} and seen  # star, or two hidden nodes with two leaves each


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_generated_trees_satisfy_invariants(seed):
    tree = generate_tree(10, max_hidden_degree=6, seed=seed)
    assert tree.structural_problems() == []
    assert set(tree.parent) == set(tree.nodes)  # connected
    assert len(tree.edges) == len(tree.nodes) - 1


def test_generation_is_deterministic():
    a = generate_tree(9, seed=123)
    b = generate_tree(9, seed=123)
    assert a.edges == b.edges and a.root == b.root


def test_infeasible_requests_raise():
    with pytest.raises(InfeasibleTreeError):
        generate_tree(2)
    with pytest.raises(InfeasibleTreeError):
        generate_tree(5, max_hidden_degree=2)


def test_structural_problems_detects_degree_two_hidden():
    tree = LatentTree(
        observed=("x1", "x2"),
        hidden=("h1",),
        edges=(("h1", "x1"), ("h1", "x2")),
        root="h1",
    )
    problems = tree.structural_problems()
    assert any("degree 2" in p for p in problems)
    with pytest.raises(InfeasibleTreeError):
        tree.validate()


def test_lca_and_path():
    tree = generate_tree(8, seed=5)
    x, y = tree.observed[0], tree.observed[-1]
    p = tree.path(x, y)
    assert p[0] == x and p[-1] == y
    assert tree.lca(x, y) in p
    for a, b in zip(p, p[1:]):
        assert tuple(sorted((a, b))) in tree.edges


def test_document_round_trip():
    tree = generate_tree(7, seed=77)
    again = load_tree(dump_tree(tree))
    assert again.edges == tree.edges
    assert again.observed == tree.observed
    assert again.hidden == tree.hidden
    assert again.root == tree.root


def test_newick_mentions_every_leaf_once():
    tree = generate_tree(6, seed=4)
    nwk = to_newick(tree)
    assert nwk.endswith(";")
    for leaf in tree.observed:
        assert nwk.count(leaf) == 1


def test_bad_document_rejected():
    with pytest.raises(ValueError):
        load_tree(json.dumps({"format": "something-else"}))
