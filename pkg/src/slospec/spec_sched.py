"""SLO-customized speculative decoding: speculate, SLO-customized select, throughput select.

Path probabilities here are the draft model's approximations; the selection
stages never look at the target model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lm_sim import MAX_CONTEXT, TokenModel
from .sched_math import RequestState, slo_deficit_capped
from .token_tree import COND_PROB_CAP, PATH_PROB_FLOOR, Frontier, TokenTree, tie_key


@dataclass(frozen=True)
class SpecParams:
    depth: int
    width: int
    budget: int
    n_max: int | None = None

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.budget < 1:
            raise ValueError(f"depth, width and budget must be >= 1: {self}")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")

    @property
    def request_cap(self) -> int:
        if self.n_max is not None:
            return self.n_max
        return default_n_max(self.depth, self.width)


def default_n_max(depth: int, width: int) -> int:
    return depth + 1 + math.ceil(width / 2)


@dataclass
class DraftPlan:
    trees: list[TokenTree]
    candidates: list[TokenTree] = field(default_factory=list, repr=False)
    depth: int = 0
    width: int = 0

    @property
    def tokens_used(self) -> int:
        return sum(len(t) for t in self.trees)

    @property
    def masses(self) -> list[float]:
        return [t.expected_accepted() for t in self.trees]

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "width": self.width,
            "tokens_used": self.tokens_used,
            "trees": [t.to_dict() for t in self.trees],
        }


def _beam(draft: TokenModel, context: tuple[int, ...], depth: int, width: int,
          request: int = 0) -> TokenTree:
    tree = TokenTree(context[-1])
    layer = [0]
    for level in range(1, depth + 1):
        probs, parents, tokens = [], [], []
        for node in layer:
            q = np.minimum(draft.next_token_dist(context + tree.path(node)), COND_PROB_CAP)
            fp = np.maximum(tree[node].path_prob * q, PATH_PROB_FLOOR)
            live = np.flatnonzero(q > 0.0)
            probs.append(fp[live])
            parents.append(np.full(len(live), node))
            tokens.append(live)
        fp = np.concatenate(probs)
        par = np.concatenate(parents)
        tok = np.concatenate(tokens)
        if len(fp) > width:
            # everything tied with the width-th value goes through the exact ordering
            cut = np.partition(fp, len(fp) - width)[len(fp) - width]
            pool = np.flatnonzero(fp >= cut)
        else:
            pool = np.arange(len(fp))
        keyed = sorted(pool, key=lambda k: tie_key(float(fp[k]), request, level, int(tok[k]),
                                                   tree.path(int(par[k])) + (int(tok[k]),)))
        kept = keyed[:width]
        layer = [tree.add_with_path_prob(int(par[k]), int(tok[k]), float(fp[k])) for k in kept]
        if not layer:
            break
    return tree


def speculate(draft: TokenModel, requests: Sequence[RequestState], params: SpecParams) -> list[TokenTree]:
    """Depth-d, width-w beam search per request over the draft model."""
    return [_beam(draft, tuple(r.sequence[-MAX_CONTEXT:]), params.depth, params.width, i)
            for i, r in enumerate(requests)]


def candidate_from_sequence(draft: TokenModel, sequence: Sequence[int], depth: int, width: int) -> TokenTree:
    return _beam(draft, tuple(sequence), depth, width)


class _Selection:
    """Draft trees being carved out of candidate trees, with their frontiers."""

    def __init__(self, candidates: Sequence[TokenTree]):
        self.candidates = list(candidates)
        self.trees = [TokenTree(c.root_token) for c in candidates]
        self.remap = [{0: 0} for _ in candidates]
        self.frontiers = [Frontier() for _ in candidates]
        for i in range(len(candidates)):
            self._expose(self.frontiers[i], i, 0)

    def _expose(self, fr: Frontier, i: int, cand_node: int) -> None:
        cand = self.candidates[i]
        for tok, cid in cand.children(cand_node).items():
            c = cand[cid]
            fr.push(c.path_prob, i, c.depth, tok, cid, cand.path(cid))

    def take(self, i: int, cand_node: int, fr: Frontier) -> float:
        node = self.candidates[i][cand_node]
        self.remap[i][cand_node] = self.trees[i].add_with_path_prob(
            self.remap[i][node.parent], node.token, node.path_prob)
        self._expose(fr, i, cand_node)
        return node.path_prob


def slo_select(candidates: Sequence[TokenTree], deficits_capped: Sequence[float], params: SpecParams,
               remaining_budget: int, priority: Sequence[float] | None = None):
    """Grow each tree toward its capped deficit, slowest requests first.

    ``priority`` (defaults to the capped deficits) sets the processing order;
    ties go to the lower request index.  Returns the selection state and the
    budget left over.
    """
    sel = _Selection(candidates)
    keys = deficits_capped if priority is None else priority
    order = sorted(range(len(candidates)), key=lambda i: (-keys[i], i))
    cap = params.request_cap
    for i in order:
        n_acc = 1.0
        fr = sel.frontiers[i]
        while n_acc < deficits_capped[i] and len(sel.trees[i]) < cap and remaining_budget > 0 and fr:
            e = fr.pop()
            n_acc += sel.take(i, e.payload, fr)
            remaining_budget -= 1
    return sel, remaining_budget


def throughput_select(sel: _Selection, remaining_budget: int) -> list[TokenTree]:
    """Spend the leftover budget on the globally most probable candidate nodes."""
    merged = Frontier()
    for fr in sel.frontiers:
        while fr:
            e = fr.pop()
            merged.push(e.path_prob, e.request, e.depth, e.token, e.payload,
                        sel.candidates[e.request].path(e.payload))
    while remaining_budget > 0 and merged:
        e = merged.pop()
        sel.take(e.request, e.payload, merged)
        remaining_budget -= 1
    return sel.trees


def select(candidates: Sequence[TokenTree], deficits: Sequence[float], params: SpecParams) -> DraftPlan:
    """Both selection stages over an existing candidate forest."""
    n = len(candidates)
    if n == 0:
        return DraftPlan([], [], params.depth, params.width)
    if params.budget < n:
        raise ValueError(f"budget {params.budget} cannot cover {n} roots")
    capped = [slo_deficit_capped(a, params.depth) for a in deficits]
    sel, left = slo_select(candidates, capped, params, params.budget - n, priority=list(deficits))
    trees = throughput_select(sel, left)
    return DraftPlan(trees, list(candidates), params.depth, params.width)


def plan_iteration(draft: TokenModel, requests: Sequence[RequestState], params: SpecParams,
                   deficits: Sequence[float]) -> DraftPlan:
    if len(requests) != len(deficits):
        raise ValueError("need one deficit per request")
    if not requests:
        return DraftPlan([], [], params.depth, params.width)
    if params.budget < len(requests):
        raise ValueError(f"budget {params.budget} cannot cover {len(requests)} roots")
    return select(speculate(draft, requests, params), deficits, params)
