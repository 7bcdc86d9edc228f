import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import assert_connected, connected_subsets, random_instance, subset_mass
from slospec.lm_sim import LmOracle
from slospec.optimal_sched import (InstanceTooLargeError, brute_force_optimal, construct_optimal,
                                   truncated_inf_tree)
from slospec.token_tree import TokenTree


def small_tree() -> TokenTree:
    t = TokenTree(0)
    a = t.add_child(0, 1, 0.6)
    t.add_child(0, 2, 0.3)
    t.add_child(a, 3, 0.7)  # f = 0.42
    return t


def test_single_request_example():
    plan = construct_optimal([small_tree()], [0.0], 3)
    assert plan.valid
    assert np.allclose(sorted(n.path_prob for n in plan.trees[0] if n.id != 0), [0.42, 0.6])
    assert math.isclose(plan.objective, 2.02)
    brute = brute_force_optimal([small_tree()], [0.0], 3)
    assert brute.objective == plan.objective
    # exhaustive check of every 3-node connected subset
    assert max(subset_mass(small_tree(), s) for s in connected_subsets(small_tree(), 3)) == plan.objective


def test_infeasible_pair():
    trees = [small_tree(), small_tree()]
    assert not construct_optimal(trees, [3.5, 3.5], 4).valid
    assert not brute_force_optimal(trees, [3.5, 3.5], 4).valid


def test_budget_equal_to_roots():
    trees = [small_tree() for _ in range(3)]
    plan = construct_optimal(trees, [0.5, 1.0, -2.0], 3)
    assert [len(t) for t in plan.trees] == [1, 1, 1]
    assert plan.objective == 3.0


def test_select_everything():
    trees = [small_tree(), small_tree()]
    total = math.fsum(n.path_prob for t in trees for n in t)
    plan = construct_optimal(trees, [0.0, 0.0], 8)
    assert plan.tokens_used == 8 and plan.objective == total
    assert brute_force_optimal(trees, [0.0, 0.0], 8).objective == total


def test_precondition_errors():
    with pytest.raises(ValueError):
        construct_optimal([small_tree(), small_tree()], [0.0, 0.0], 1)
    with pytest.raises(ValueError):
        construct_optimal([small_tree()], [math.inf], 3)
    big = truncated_inf_tree(LmOracle(4, 0), (1,), 3)
    with pytest.raises(InstanceTooLargeError):
        brute_force_optimal([big], [0.0], 5)
    with pytest.raises(InstanceTooLargeError):
        brute_force_optimal([small_tree()], [0.0], 13)


def test_truncated_tree_shape():
    t = truncated_inf_tree(LmOracle(3, 1), (0, 2), 3)
    assert len(t) == 1 + 3 + 9 + 27
    for n in t:
        kids = t.children(n.id).values()
        if kids:
            assert math.fsum(t[c].path_prob for c in kids) <= n.path_prob * (1 + 1e-9)


def test_pruning_threshold_recorded():
    t = truncated_inf_tree(LmOracle(4, 2, sharpness=8.0), (1,), 3, prune_below=1e-2)
    assert all(n.path_prob >= 1e-2 for n in t)
    assert construct_optimal([t], [0.0], 2).pruning_threshold == 1e-6


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_matches_brute_force(seed):
    inst = random_instance(np.random.default_rng(seed))
    plan = construct_optimal(inst.trees, inst.deficits, inst.budget)
    brute = brute_force_optimal(inst.trees, inst.deficits, inst.budget)
    assert plan.valid == brute.valid
    if plan.valid:
        assert plan.objective == brute.objective
        assert plan.tokens_used <= inst.budget
        for t, a in zip(plan.trees, inst.deficits):
            assert t.expected_accepted() >= a


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_trees_are_connected(seed):
    inst = random_instance(np.random.default_rng(seed), max_budget=20)
    plan = construct_optimal(inst.trees, inst.deficits, inst.budget)
    for t, src in zip(plan.trees or [], inst.trees):
        assert_connected(t)
        assert t.paths() <= src.paths()


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_step1_is_minimal(seed):
    inst = random_instance(np.random.default_rng(seed))
    plan = construct_optimal(inst.trees, inst.deficits, inst.budget)
    brute = brute_force_optimal(inst.trees, inst.deficits, inst.budget)
    for used, smallest in zip(plan.step1_counts, brute.min_feasible_sizes):
        # smallest counts the root; step-1 counts only the added nodes
        assert smallest is not None and used + 1 <= smallest


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_invalid_is_sound(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    deficits = [a + 1.0 for a in inst.deficits]  # push toward infeasibility
    if not construct_optimal(inst.trees, deficits, inst.budget).valid:
        assert not brute_force_optimal(inst.trees, deficits, inst.budget).valid
