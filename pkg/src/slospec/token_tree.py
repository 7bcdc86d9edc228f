"""Draft token trees and the max-probability frontier used by every scheduler."""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterator

COND_PROB_CAP = 1.0 - 1e-12
PATH_PROB_FLOOR = 1e-300


class DuplicateSiblingError(ValueError):
    pass


class UnknownParentError(KeyError):
    pass


class EmptyFrontierError(IndexError):
    pass


@dataclass(frozen=True)
class TreeNode:
    id: int
    token: int
    parent: int  # root points at itself
    depth: int
    path_prob: float


class TokenTree:
    """Rooted tree of speculated tokens.

    Node 0 is the root (the request's last token) with ``path_prob == 1``.
    Every other node carries the product of conditional probabilities along
    its root path, which is strictly smaller than its parent's.
    """

    root = 0

    def __init__(self, root_token: int):
        self._nodes: list[TreeNode] = [TreeNode(0, int(root_token), 0, 0, 1.0)]
        self._children: list[dict[int, int]] = [{}]

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self) -> Iterator[TreeNode]:
        return iter(self._nodes)

    def __getitem__(self, node_id: int) -> TreeNode:
        return self._nodes[node_id]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TokenTree) and self._nodes == other._nodes

    def __repr__(self) -> str:
        return f"TokenTree(root_token={self._nodes[0].token}, size={len(self)})"

    @property
    def root_token(self) -> int:
        return self._nodes[0].token

    @property
    def depth(self) -> int:
        return max(n.depth for n in self._nodes)

    def children(self, node_id: int) -> dict[int, int]:
        """Mapping token -> child node id."""
        return self._children[node_id]

    def child(self, node_id: int, token: int) -> int | None:
        return self._children[node_id].get(token)

    def add_child(self, parent: int, token: int, cond_prob: float) -> int:
        if not cond_prob > 0.0:
            raise ValueError(f"cond_prob must be positive, got {cond_prob}")
        self._check_parent(parent)
        cond = min(float(cond_prob), COND_PROB_CAP)
        return self._attach(parent, token, max(self._nodes[parent].path_prob * cond, PATH_PROB_FLOOR))

    def add_with_path_prob(self, parent: int, token: int, path_prob: float) -> int:
        """Attach a node whose path probability was computed elsewhere (copied verbatim)."""
        self._check_parent(parent)
        if not 0.0 < path_prob < self._nodes[parent].path_prob:
            raise ValueError(
                f"path_prob {path_prob} must lie in (0, {self._nodes[parent].path_prob})")
        return self._attach(parent, token, float(path_prob))

    def _check_parent(self, parent: int) -> None:
        if not 0 <= parent < len(self._nodes):
            raise UnknownParentError(parent)

    def _attach(self, parent: int, token: int, path_prob: float) -> int:
        token = int(token)
        if token in self._children[parent]:
            raise DuplicateSiblingError(f"token {token} already under node {parent}")
        node = TreeNode(len(self._nodes), token, parent, self._nodes[parent].depth + 1, path_prob)
        self._nodes.append(node)
        self._children.append({})
        self._children[parent][token] = node.id
        return node.id

    def path(self, node_id: int) -> tuple[int, ...]:
        """Draft tokens from just below the root down to ``node_id``."""
        toks = []
        while node_id != 0:
            n = self._nodes[node_id]
            toks.append(n.token)
            node_id = n.parent
        return tuple(reversed(toks))

    def paths(self) -> set[tuple[int, ...]]:
        return {self.path(n.id) for n in self._nodes}

    def find(self, path: tuple[int, ...]) -> int | None:
        node = 0
        for tok in path:
            node = self._children[node].get(tok)
            if node is None:
                return None
        return node

    def expected_accepted(self) -> float:
        return expected_accepted(self)

    def validate(self) -> None:
        """Raise AssertionError unless every structural invariant holds."""
        root = self._nodes[0]
        assert root.parent == 0 and root.depth == 0 and root.path_prob == 1.0
        seen = set()
        for n in self._nodes[1:]:
            assert 0 <= n.parent < n.id, f"node {n.id} has dangling parent {n.parent}"
            par = self._nodes[n.parent]
            assert n.depth == par.depth + 1, f"node {n.id} depth mismatch"
            assert 0.0 < n.path_prob < par.path_prob, f"node {n.id} path_prob not below parent"
            key = (n.parent, n.token)
            assert key not in seen, f"duplicate sibling token {key}"
            seen.add(key)

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [
                {"id": n.id, "parent": n.parent, "token": n.token, "depth": n.depth,
                 "path_prob": n.path_prob}
                for n in self._nodes
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "TokenTree":
        nodes = sorted(doc["nodes"], key=lambda d: d["id"])
        if not nodes or nodes[0]["id"] != 0:
            raise ValueError("tree document needs a root with id 0")
        tree = cls(nodes[0]["token"])
        for d in nodes[1:]:
            if d["id"] != len(tree):
                raise ValueError(f"non-contiguous node id {d['id']}")
            tree._check_parent(d["parent"])
            tree._attach(d["parent"], d["token"], float(d["path_prob"]))
            if tree[d["id"]].depth != d["depth"]:
                raise ValueError(f"depth mismatch at node {d['id']}")
        tree.validate()
        return tree

    def to_json(self) -> str:
        # repr-exact floats keep round-trips bit-identical
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TokenTree":
        return cls.from_dict(json.loads(text))


def expected_accepted(tree: TokenTree) -> float:
    """E[acc(T)] as the sum of path probabilities, root included."""
    return math.fsum(n.path_prob for n in tree)


@dataclass(order=True)
class FrontierEntry:
    sort_key: tuple = field(init=True, repr=False)
    seq: int = field(compare=True, repr=False)
    path_prob: float = field(compare=False)
    request: int = field(compare=False)
    depth: int = field(compare=False)
    token: int = field(compare=False)
    payload: Any = field(default=None, compare=False)


def tie_key(path_prob: float, request: int, depth: int, token: int, path: tuple = ()) -> tuple:
    """Global ordering: larger path_prob, then smaller request, shallower, smaller token.

    The full token path closes remaining ties so the order is total.
    """
    return (-path_prob, request, depth, token, path)


class Frontier:
    """Max-heap of candidate nodes keyed by path probability."""

    def __init__(self):
        self._heap: list[FrontierEntry] = []
        self._counter = itertools.count()

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)

    def push(self, path_prob: float, request: int, depth: int, token: int,
             payload: Any = None, path: tuple = ()) -> None:
        entry = FrontierEntry(tie_key(path_prob, request, depth, token, path), next(self._counter),
                              path_prob, request, depth, token, payload)
        heapq.heappush(self._heap, entry)

    def peek(self) -> FrontierEntry:
        if not self._heap:
            raise EmptyFrontierError("frontier is empty")
        return self._heap[0]

    def pop(self) -> FrontierEntry:
        if not self._heap:
            raise EmptyFrontierError("frontier is empty")
        return heapq.heappop(self._heap)


def frontier_pop(frontier: Frontier) -> FrontierEntry:
    return frontier.pop()
