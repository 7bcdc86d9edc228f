"""Optimal token-tree construction under known path probabilities, plus a brute-force oracle.

The greedy construction charges one budget unit per request root, then grows
each request's tree toward its deficit (requests in input order) and spends
whatever budget is left on the globally most probable remaining nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .lm_sim import TokenModel
from .token_tree import Frontier, TokenTree

PRUNE_BELOW = 1e-6
MAX_BRUTE_NODES = 24
MAX_BRUTE_BUDGET = 12


class InstanceTooLargeError(ValueError):
    pass


@dataclass
class OptimalPlan:
    """Per-request trees, or ``trees is None`` for the INVALID verdict."""

    trees: list[TokenTree] | None
    step1_counts: list[int] = field(default_factory=list)
    min_feasible_sizes: list[int | None] = field(default_factory=list)
    pruning_threshold: float = PRUNE_BELOW

    @property
    def valid(self) -> bool:
        return self.trees is not None

    @property
    def objective(self) -> float:
        if self.trees is None:
            return float("nan")
        return math.fsum(n.path_prob for t in self.trees for n in t)

    @property
    def tokens_used(self) -> int:
        return sum(len(t) for t in self.trees) if self.trees else 0

    @property
    def max_depth(self) -> int:
        return max((t.depth for t in self.trees), default=0) if self.trees else 0


def truncated_inf_tree(target: TokenModel, context: Sequence[int], depth: int,
                       prune_below: float = PRUNE_BELOW) -> TokenTree:
    """Complete |V|-ary tree of true path probabilities down to ``depth``.

    Nodes whose path probability drops below ``prune_below`` are left out,
    along with their subtrees.
    """
    tree = TokenTree(context[-1])
    layer = [(0, tuple(context))]
    for _ in range(depth):
        nxt = []
        for node, ctx in layer:
            dist = target.next_token_dist(ctx)
            base = tree[node].path_prob
            for tok, p in enumerate(dist):
                if p <= 0.0 or base * p < prune_below:
                    continue
                child = tree.add_child(node, tok, float(p))
                nxt.append((child, ctx + (tok,)))
        layer = nxt
    return tree


def _meets(mass: float, threshold: float) -> bool:
    return mass >= threshold


def _copy_selected(src: TokenTree, selected: Sequence[int]) -> TokenTree:
    """Build a standalone tree from ``selected`` node ids of ``src`` (parents first)."""
    out = TokenTree(src.root_token)
    remap = {0: 0}
    for nid in sorted(selected, key=lambda i: (src[i].depth, i)):
        if nid == 0:
            continue
        node = src[nid]
        remap[nid] = out.add_with_path_prob(remap[node.parent], node.token, node.path_prob)
    return out


def construct_optimal(inf_trees: Sequence[TokenTree], deficits: Sequence[float],
                      budget: int) -> OptimalPlan:
    n = len(inf_trees)
    if len(deficits) != n:
        raise ValueError("need one deficit per request")
    if budget < n:
        raise ValueError(f"budget {budget} cannot cover {n} roots")
    if not all(math.isfinite(a) for a in deficits):
        raise ValueError("deficits must be finite")

    remaining = budget - n
    selected: list[list[int]] = [[0] for _ in range(n)]
    masses: list[list[float]] = [[1.0] for _ in range(n)]
    frontiers = []
    for i, tree in enumerate(inf_trees):
        fr = Frontier()
        _push_children(fr, tree, 0, i)
        frontiers.append(fr)

    step1 = []
    for i, tree in enumerate(inf_trees):
        added = 0
        while not _meets(math.fsum(masses[i]), deficits[i]):
            if remaining <= 0 or not frontiers[i]:
                return OptimalPlan(None, step1)
            e = frontiers[i].pop()
            selected[i].append(e.payload)
            masses[i].append(e.path_prob)
            _push_children(frontiers[i], tree, e.payload, i)
            remaining -= 1
            added += 1
        step1.append(added)

    merged = Frontier()
    for fr in frontiers:
        while fr:
            e = fr.pop()
            merged.push(e.path_prob, e.request, e.depth, e.token, e.payload,
                        inf_trees[e.request].path(e.payload))
    while remaining > 0 and merged:
        e = merged.pop()
        i = e.request
        selected[i].append(e.payload)
        _push_children(merged, inf_trees[i], e.payload, i)
        remaining -= 1

    return OptimalPlan([_copy_selected(t, s) for t, s in zip(inf_trees, selected)], step1)


def _push_children(fr: Frontier, tree: TokenTree, node: int, request: int) -> None:
    for tok, cid in tree.children(node).items():
        c = tree[cid]
        fr.push(c.path_prob, request, c.depth, tok, cid, tree.path(cid))


def _rooted_subtrees(tree: TokenTree, max_size: int):
    """Yield (node ids, exact mass) for every connected root-containing subset.

    Classic reverse search: the next node is picked from an ordered frontier
    and everything skipped before it is excluded from that branch, so each
    subset appears exactly once.
    """
    def grow(chosen, mass, frontier):
        yield chosen, mass
        if len(chosen) >= max_size:
            return
        for k, v in enumerate(frontier):
            rest = frontier[k + 1:] + list(tree.children(v).values())
            yield from grow(chosen + [v], mass + Fraction(tree[v].path_prob), rest)

    yield from grow([0], Fraction(1), list(tree.children(0).values()))


def brute_force_optimal(inf_trees: Sequence[TokenTree], deficits: Sequence[float],
                        budget: int) -> OptimalPlan:
    """Exhaustive search over all families of rooted subtrees (small instances only)."""
    n = len(inf_trees)
    total_nodes = sum(len(t) for t in inf_trees)
    if total_nodes > MAX_BRUTE_NODES or budget > MAX_BRUTE_BUDGET:
        raise InstanceTooLargeError(
            f"{total_nodes} nodes / budget {budget} exceeds {MAX_BRUTE_NODES} / {MAX_BRUTE_BUDGET}")
    if budget < n:
        raise ValueError(f"budget {budget} cannot cover {n} roots")

    per_size_cap = budget - (n - 1)
    best: list[dict[int, tuple[Fraction, list[int]]]] = []
    min_sizes: list[int | None] = []
    for tree, a in zip(inf_trees, deficits):
        table: dict[int, tuple[Fraction, list[int]]] = {}
        smallest = None
        for nodes, mass in _rooted_subtrees(tree, per_size_cap):
            if not _meets(float(mass), a):
                continue
            k = len(nodes)
            smallest = k if smallest is None else min(smallest, k)
            if k not in table or mass > table[k][0]:
                table[k] = (mass, nodes)
        best.append(table)
        min_sizes.append(smallest)

    # knapsack over requests: total size -> (exact mass, chosen sizes)
    states: dict[int, tuple[Fraction, list[int]]] = {0: (Fraction(0), [])}
    for table in best:
        nxt: dict[int, tuple[Fraction, list[int]]] = {}
        for used, (mass, sizes) in states.items():
            for k, (m, _) in table.items():
                if used + k > budget:
                    continue
                cand = (mass + m, sizes + [k])
                cur = nxt.get(used + k)
                if cur is None or cand[0] > cur[0]:
                    nxt[used + k] = cand
        states = nxt
    if not states:
        return OptimalPlan(None, min_feasible_sizes=min_sizes)
    _, sizes = max(states.values(), key=lambda s: s[0])
    trees = [_copy_selected(t, best[i][k][1]) for i, (t, k) in enumerate(zip(inf_trees, sizes))]
    return OptimalPlan(trees, min_feasible_sizes=min_sizes)
