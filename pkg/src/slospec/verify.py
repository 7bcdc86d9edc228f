"""Sampling-walk tree verification.

At each accepted node the target samples one token; a matching child is
accepted and the walk continues, otherwise the sample becomes the bonus token.
Node ``v`` is therefore accepted with probability equal to the product of
target conditionals along its path, and E[acc(T)] is the sum of those.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lm_sim import TokenModel, sample_from
from .token_tree import TokenTree


@dataclass(frozen=True)
class VerifyOutcome:
    accepted_count: int
    accepted_path: tuple[int, ...]
    accepted_nodes: tuple[int, ...]
    diverged_at: int | None  # node whose children all missed; None when the walk ran off a leaf


def verify_tree(target: TokenModel, sequence: Sequence[int], tree: TokenTree,
                rng: np.random.Generator) -> VerifyOutcome:
    if sequence[-1] != tree.root_token:
        raise ValueError("tree must be rooted at the sequence's last token")
    ctx = tuple(sequence)
    node = 0
    nodes = [0]
    path: list[int] = []
    while True:
        tok = sample_from(target.next_token_dist(ctx), rng.random())
        path.append(tok)
        nxt = tree.child(node, tok)
        if nxt is None:
            diverged = node if tree.children(node) else None
            return VerifyOutcome(len(path), tuple(path), tuple(nodes), diverged)
        node = nxt
        nodes.append(node)
        ctx = ctx + (tok,)


def simulate_acceptance(target: TokenModel, sequence: Sequence[int], tree: TokenTree,
                        rng: np.random.Generator, trials: int) -> np.ndarray:
    """Vectorized replay of ``verify_tree`` returning ``trials`` accepted counts."""
    ctx = tuple(sequence)
    vocab = len(target.next_token_dist(ctx))
    cdfs = np.empty((len(tree), vocab))
    child_of = np.full((len(tree), vocab), -1, dtype=np.int64)
    for node in tree:
        cdfs[node.id] = np.cumsum(target.next_token_dist(ctx + tree.path(node.id)))
        for tok, cid in tree.children(node.id).items():
            child_of[node.id, tok] = cid

    counts = np.ones(trials, dtype=np.int64)
    state = np.zeros(trials, dtype=np.int64)
    alive = np.ones(trials, dtype=bool)
    for _ in range(tree.depth + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        u = rng.random(idx.size)
        cur = state[idx]
        toks = np.empty(idx.size, dtype=np.int64)
        for nid in np.unique(cur):
            m = cur == nid
            toks[m] = np.minimum(np.searchsorted(cdfs[nid], u[m], side="right"), vocab - 1)
        nxt = child_of[cur, toks]
        hit = nxt >= 0
        state[idx[hit]] = nxt[hit]
        counts[idx[hit]] += 1
        alive[idx[~hit]] = False
    return counts


def mean_acceptance(n_tokens: int, probs: Sequence[float]) -> float:
    """Expected accepted count ``n * mean(probs)``, computed as the exact sum."""
    if len(probs) != n_tokens:
        raise ValueError("need one probability per token")
    if any(not 0.0 <= p <= 1.0 for p in probs):
        raise ValueError("acceptance probabilities must lie in [0, 1]")
    return math.fsum(probs)
