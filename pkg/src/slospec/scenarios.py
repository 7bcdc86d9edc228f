"""Hand-built two-request scenario with budget 8, depth 3 and beam width 2.

Draft probabilities are chosen so that the candidate trees carry the path
probabilities 0.7 (r0's best child), 0.5/0.4 (r1's two children) and so on;
selection must end with T0 = {root, t1, t3, t5} and T1 = {root, t1, t2, t3}.
"""

from __future__ import annotations

from .lm_sim import TableOracle
from .sched_math import RequestState
from .spec_sched import DraftPlan, SpecParams, plan_iteration

VOCAB = 8
PROMPTS = ((6, 0), (7, 1))
PARAMS = SpecParams(depth=3, width=2, budget=8)
# thresholds under the root-counts-as-1.0 convention: 1.0 + (0.6, 0.8)
DEFICITS = (1.6, 1.8)


def _dist(spec: dict[int, float]) -> list[float]:
    rest = [t for t in range(VOCAB) if t not in spec]
    fill = (1.0 - sum(spec.values())) / len(rest)
    return [spec.get(t, fill) for t in range(VOCAB)]


def _tables() -> dict[tuple[int, ...], list[float]]:
    a, b = PROMPTS
    return {
        # r0: t1=(2) 0.7, t2=(3) 0.2; t3=(2,4) 0.6, t4=(3,4) 0.1; t5=(2,4,6) 0.45, t6=(2,4,7) 0.09
        a: _dist({2: 0.7, 3: 0.2}),
        a + (2,): _dist({4: 6 / 7, 5: 0.5 / 7}),
        a + (3,): _dist({4: 0.5, 5: 0.3}),
        a + (2, 4): _dist({6: 0.75, 7: 0.15}),
        a + (3, 4): _dist({6: 0.5, 7: 0.3}),
        # r1: t1=(2) 0.5, t2=(3) 0.4; t3=(2,4) 0.3, t4=(3,4) 0.2; t5=(2,4,6) 0.15, t6=(3,4,6) 0.1
        b: _dist({2: 0.5, 3: 0.4}),
        b + (2,): _dist({4: 0.6, 5: 0.2}),
        b + (3,): _dist({4: 0.5, 5: 0.2}),
        b + (2, 4): _dist({6: 0.5}),
        b + (3, 4): _dist({6: 0.5}),
    }


# label -> token path below the root, per request
LABELS = (
    {"t1": (2,), "t2": (3,), "t3": (2, 4), "t4": (3, 4), "t5": (2, 4, 6), "t6": (2, 4, 7)},
    {"t1": (2,), "t2": (3,), "t3": (2, 4), "t4": (3, 4), "t5": (2, 4, 6), "t6": (3, 4, 6)},
)
EXPECTED = ({"t1", "t3", "t5"}, {"t1", "t2", "t3"})


def oracle() -> TableOracle:
    return TableOracle(VOCAB, _tables())


def requests() -> list[RequestState]:
    return [RequestState(i, 0.05, list(p), len(p), 1) for i, p in enumerate(PROMPTS)]


def plan() -> DraftPlan:
    return plan_iteration(oracle(), requests(), PARAMS, list(DEFICITS))


def labels_of(draft_plan: DraftPlan) -> list[set[str]]:
    out = []
    for tree, names in zip(draft_plan.trees, LABELS):
        by_path = {p: n for n, p in names.items()}
        out.append({by_path.get(tree.path(n.id), repr(tree.path(n.id))) for n in tree if n.id != 0})
    return out


def table_doc() -> dict:
    """JSON-ready form of the draft/target table for config files."""
    return {"vocab_size": VOCAB,
            "table": [{"context": list(k), "probs": v} for k, v in _tables().items()]}
