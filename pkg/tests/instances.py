"""Random small scheduling instances shared by the property and acceptance tests."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from slospec.lm_sim import LmOracle
from slospec.optimal_sched import MAX_BRUTE_NODES, truncated_inf_tree
from slospec.token_tree import TokenTree


@dataclass
class Instance:
    oracle: LmOracle
    contexts: list[tuple[int, ...]]
    depth: int
    trees: list[TokenTree]
    deficits: list[float]
    budget: int


def random_instance(rng: np.random.Generator, max_budget: int = 10) -> Instance:
    """n in {1,2,3}, |V| in {2,3,4}, depth <= 3, total nodes within the brute-force cap."""
    while True:
        n = int(rng.integers(1, 4))
        vocab = int(rng.integers(2, 5))
        depth = int(rng.integers(1, 4))
        per_tree = sum(vocab ** k for k in range(depth + 1))
        if n * per_tree <= MAX_BRUTE_NODES and n <= max_budget:
            break
    oracle = LmOracle(vocab, int(rng.integers(2**32)), float(rng.uniform(0.3, 4.0)))
    contexts = [tuple(int(t) for t in rng.integers(0, vocab, 2)) for _ in range(n)]
    trees = [truncated_inf_tree(oracle, c, depth) for c in contexts]
    deficits = [float(rng.uniform(0.0, 2.5)) for _ in range(n)]
    budget = int(rng.integers(n, max_budget + 1))
    return Instance(oracle, contexts, depth, trees, deficits, budget)


def random_tree(rng: np.random.Generator, size: int, vocab: int = 4, max_depth: int = 3) -> TokenTree:
    """Random connected tree built from random conditional probabilities."""
    tree = TokenTree(int(rng.integers(vocab)))
    while len(tree) < size:
        open_nodes = [n.id for n in tree if n.depth < max_depth and len(tree.children(n.id)) < vocab]
        if not open_nodes:
            break
        parent = open_nodes[int(rng.integers(len(open_nodes)))]
        free = [t for t in range(vocab) if t not in tree.children(parent)]
        tree.add_child(parent, free[int(rng.integers(len(free)))], float(rng.uniform(0.05, 0.95)))
    return tree


def connected_subsets(tree: TokenTree, size: int):
    """All root-containing connected node subsets of exactly ``size`` nodes (plain enumeration)."""
    others = [n.id for n in tree if n.id != 0]
    for combo in itertools.combinations(others, size - 1):
        chosen = set(combo) | {0}
        if all(tree[v].parent in chosen for v in combo):
            yield chosen


def subset_mass(tree: TokenTree, nodes) -> float:
    return math.fsum(tree[v].path_prob for v in nodes)


def assert_connected(tree: TokenTree) -> None:
    tree.validate()
    for n in tree:
        v, hops = n.id, 0
        while v != 0:
            v = tree[v].parent
            hops += 1
        assert hops == n.depth
