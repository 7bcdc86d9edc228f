"""Discrete-time serving simulator.

One global batch per iteration: admit arrivals (paying prefill), plan draft
trees under the active policy, verify them against the target model and
advance the clock by the latency model's cost for the iteration.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .lm_sim import MAX_CONTEXT, TokenModel
from .metrics import RequestRecord, RunReport
from .sched_math import RequestState, request_deficit
from .spec_sched import SpecParams, candidate_from_sequence, plan_iteration
from .token_tree import TokenTree
from .verify import verify_tree
from .workload import SloCategory, TraceRecord


class MalformedTraceError(ValueError):
    pass


@dataclass(frozen=True)
class LatencyModel:
    """Roofline-style costs in seconds.

    Verification is memory-bound (flat ``verify_base``) up to ``verify_budget``
    tokens and compute-bound (linear) beyond it.
    """

    verify_base: float = 0.040
    verify_budget: int = 128
    draft_step_base: float = 0.004
    draft_per_token: float = 2e-5
    draft_graph_discount: float = 0.8
    select_per_token: float = 1e-5
    prefill_per_token: float = 1e-4

    def __post_init__(self):
        if self.verify_base <= 0 or self.verify_budget < 1:
            raise ValueError("verify_base and verify_budget must be positive")
        if not 0.0 < self.draft_graph_discount <= 1.0:
            raise ValueError("draft_graph_discount must lie in (0, 1]")
        for name in ("draft_step_base", "draft_per_token", "select_per_token", "prefill_per_token"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def verify_latency(self, tokens: int) -> float:
        if tokens <= self.verify_budget:
            return self.verify_base
        return self.verify_base * tokens / self.verify_budget

    def draft_latency(self, depth: int, width: int, n: int) -> float:
        # step 1 decodes the n roots; steps 2..d decode n*w tokens with a reused graph
        if n == 0 or depth == 0:
            return 0.0
        first = self.draft_step_base + self.draft_per_token * n
        rest = self.draft_step_base + self.draft_per_token * n * width
        return first + (depth - 1) * self.draft_graph_discount * rest

    def select_latency(self, tokens: int) -> float:
        return self.select_per_token * tokens

    def prefill_latency(self, tokens: int) -> float:
        return self.prefill_per_token * tokens

    @property
    def baseline_latency(self) -> float:
        return self.verify_latency(1)


@dataclass(frozen=True)
class AdaptiveConfig:
    d_max: int = 8
    d_min: int = 1
    w_max: int = 4
    b1: int = 128
    b2: int = 64
    c1: int = 0
    c2: int = 0

    def __post_init__(self):
        if not 1 <= self.d_min <= self.d_max:
            raise ValueError("need 1 <= d_min <= d_max")
        if self.w_max < 1 or self.b1 < 1 or self.b2 < 1:
            raise ValueError("w_max, b1, b2 must be positive")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1, c2 must be non-negative")


def clip(hi: int, lo: int, x: int) -> int:
    return max(lo, min(hi, x))


def adaptive_params(n_active: int, cfg: AdaptiveConfig) -> tuple[int, int]:
    """Speculation depth and beam width for ``n_active`` requests."""
    if n_active < 1:
        raise ValueError("need at least one active request")
    d = clip(cfg.d_max, cfg.d_min, cfg.b1 // (n_active + cfg.c1) - 1)
    w = clip(cfg.w_max, 1, cfg.b2 // n_active + cfg.c2)
    return d, w


SLO_CUSTOMIZED = "slo-customized"
CONTINUOUS_BATCHING = "continuous-batching"
FIXED_SPEC = "fixed-spec"


@dataclass(frozen=True)
class SchedulerPolicy:
    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind not in (SLO_CUSTOMIZED, CONTINUOUS_BATCHING, FIXED_SPEC):
            raise ValueError(f"unknown policy {self.kind!r}")
        if self.kind == FIXED_SPEC and self.k < 1:
            raise ValueError("fixed-spec needs k >= 1")

    @property
    def name(self) -> str:
        return f"{FIXED_SPEC}-{self.k}" if self.kind == FIXED_SPEC else self.kind

    @classmethod
    def parse(cls, name: str) -> "SchedulerPolicy":
        aliases = {"slo": SLO_CUSTOMIZED, "cb": CONTINUOUS_BATCHING, "vllm": CONTINUOUS_BATCHING}
        name = aliases.get(name, name)
        if name.startswith(FIXED_SPEC + "-") or name.startswith("fixed:"):
            k = name.rsplit("-", 1)[-1] if name.startswith(FIXED_SPEC) else name.split(":", 1)[1]
            try:
                return cls(FIXED_SPEC, int(k))
            except ValueError:
                raise ValueError(f"bad fixed-spec policy {name!r}") from None
        return cls(name)


@dataclass(frozen=True)
class EngineConfig:
    latency: LatencyModel = field(default_factory=LatencyModel)
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    budget: int = 128
    n_max: int | None = None
    fixed_depth: int | None = None
    fixed_width: int | None = None
    max_active: int | None = None
    record_plans: bool = False

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if (self.fixed_depth is None) != (self.fixed_width is None):
            raise ValueError("fixed_depth and fixed_width must be given together")
        if self.fixed_depth is not None and (self.fixed_depth < 1 or self.fixed_width < 1):
            raise ValueError("fixed depth/width must be >= 1")
        if self.max_active is not None and not 1 <= self.max_active <= self.budget:
            raise ValueError("max_active must lie in [1, budget]")

    @property
    def active_cap(self) -> int:
        return self.max_active if self.max_active is not None else self.budget

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RequestSpec:
    arrival_time: float
    category: str
    tpot_slo: float
    prompt_len: int
    output_len: int
    prompt: tuple[int, ...] | None = None


def requests_from_trace(trace: Sequence[TraceRecord], categories: Sequence[SloCategory]) -> list[RequestSpec]:
    tpot = {c.name: c.tpot_slo for c in categories}
    out = []
    for i, r in enumerate(trace):
        if r.category not in tpot:
            raise MalformedTraceError(f"record {i}: unknown category {r.category!r}")
        out.append(RequestSpec(r.arrival_time, r.category, tpot[r.category], r.prompt_len, r.output_len))
    return out


@dataclass
class _Live:
    rid: int
    spec: RequestSpec
    state: RequestState
    rng: np.random.Generator
    decode_start: float = 0.0
    verifications: int = 0
    accepted_total: int = 0

    def context(self) -> tuple[int, ...]:
        return tuple(self.state.sequence[-MAX_CONTEXT:])


@dataclass
class IterationOutcome:
    index: int
    start: float
    n_active: int
    depth: int
    width: int
    tokens_used: int
    latency: float
    accepted: list[int]
    completed: list[int]
    plan: dict | None = None


class Engine:
    """Single-threaded simulator state.  ``run`` drives ``step`` until drained."""

    def __init__(self, policy: SchedulerPolicy, cfg: EngineConfig, target: TokenModel,
                 draft: TokenModel, seed: int):
        self.policy = policy
        self.cfg = cfg
        self.target = target
        self.draft = draft
        self.seed = seed
        self.clock = 0.0
        self.pending: deque[tuple[int, RequestSpec]] = deque()
        self.active: list[_Live] = []
        self.completed: list[RequestRecord] = []
        self.iteration = 0
        self.last_latency: float | None = None
        self.plans: list[dict] = []
        self._next_rid = 0
        self._stats = {"tokens_used": 0, "depth": 0, "width": 0}

    def submit(self, specs: Sequence[RequestSpec]) -> None:
        last = -math.inf
        for spec in specs:
            if not (spec.arrival_time >= 0 and math.isfinite(spec.arrival_time)):
                raise MalformedTraceError(f"bad arrival time {spec.arrival_time}")
            if spec.arrival_time < last:
                raise MalformedTraceError("requests must be sorted by arrival time")
            if spec.output_len < 1 or spec.prompt_len < 1 or spec.tpot_slo <= 0:
                raise MalformedTraceError(f"invalid request {spec}")
            if spec.prompt is not None and len(spec.prompt) != spec.prompt_len:
                raise MalformedTraceError("prompt length mismatch")
            last = spec.arrival_time
            self.pending.append((self._next_rid, spec))
            self._next_rid += 1

    def _make_live(self, rid: int, spec: RequestSpec) -> _Live:
        rng = np.random.default_rng([self.seed, rid])
        prompt = list(spec.prompt) if spec.prompt is not None else \
            rng.integers(0, self.target.vocab_size, spec.prompt_len).tolist()
        state = RequestState(rid, spec.tpot_slo, prompt, len(prompt), spec.output_len,
                             category=spec.category, arrival_time=spec.arrival_time)
        return _Live(rid, spec, state, rng)

    def _admit(self) -> None:
        if not self.active and self.pending:
            self.clock = max(self.clock, self.pending[0][1].arrival_time)
        admitted = []
        while self.pending and self.pending[0][1].arrival_time <= self.clock \
                and len(self.active) + len(admitted) < self.cfg.active_cap:
            rid, spec = self.pending.popleft()
            self.clock += self.cfg.latency.prefill_latency(spec.prompt_len)
            admitted.append(self._make_live(rid, spec))
        for live in admitted:
            live.decode_start = self.clock
        self.active.extend(admitted)

    def _spec_params(self, n: int) -> SpecParams:
        if self.cfg.fixed_depth is not None:
            d, w = self.cfg.fixed_depth, self.cfg.fixed_width
        else:
            d, w = adaptive_params(n, self.cfg.adaptive)
        return SpecParams(d, w, self.cfg.budget, self.cfg.n_max)

    def predicted_latency(self, n: int, params: SpecParams) -> float:
        lat = self.cfg.latency
        tokens = min(params.budget, n * (1 + params.depth * params.width))
        return lat.draft_latency(params.depth, params.width, n) + lat.select_latency(tokens) \
            + lat.verify_latency(tokens)

    def _plan(self) -> tuple[list[TokenTree], int, int, float, dict | None]:
        lat = self.cfg.latency
        n = len(self.active)
        kind = self.policy.kind
        if kind == CONTINUOUS_BATCHING:
            trees = [TokenTree(live.state.last_token) for live in self.active]
            return trees, 0, 0, lat.verify_latency(n), None
        if kind == FIXED_SPEC:
            k = self.policy.k
            trees = [candidate_from_sequence(self.draft, live.context(), k, 1) for live in self.active]
            used = sum(len(t) for t in trees)
            return trees, k, 1, lat.draft_latency(k, 1, n) + lat.verify_latency(used), None
        params = self._spec_params(n)
        t_spec = self.last_latency if self.last_latency is not None else self.predicted_latency(n, params)
        deficits = [request_deficit(live.state, t_spec) for live in self.active]
        plan = plan_iteration(self.draft, [live.state for live in self.active], params, deficits)
        used = plan.tokens_used
        cost = lat.draft_latency(params.depth, params.width, n) + lat.select_latency(used) \
            + lat.verify_latency(used)
        doc = None
        if self.cfg.record_plans:
            doc = plan.to_dict()
            doc["deficits"] = deficits
            doc["t_spec"] = t_spec
        return plan.trees, params.depth, params.width, cost, doc

    def step(self) -> IterationOutcome:
        self._admit()
        if not self.active:
            raise RuntimeError("step() with no active requests")
        for live in self.active:
            live.state.decode_latency = self.clock - live.decode_start
        start = self.clock
        trees, d, w, cost, doc = self._plan()
        accepted = []
        for live, tree in zip(self.active, trees):
            out = verify_tree(self.target, live.context(), tree, live.rng)
            room = live.state.remaining_output - live.state.emitted
            live.state.sequence.extend(out.accepted_path[:room])
            live.verifications += 1
            live.accepted_total += out.accepted_count
            accepted.append(out.accepted_count)
        self.clock = start + cost
        self.last_latency = cost

        done, still = [], []
        for live in self.active:
            live.state.decode_latency = self.clock - live.decode_start
            if live.state.emitted >= live.state.remaining_output:
                done.append(live)
            else:
                still.append(live)
        self.active = still
        for live in done:
            self.completed.append(RequestRecord(
                live.rid, live.spec.category, live.spec.tpot_slo, live.spec.arrival_time,
                live.decode_start, self.clock, live.state.emitted, live.state.decode_latency,
                live.verifications, live.accepted_total))

        used = sum(len(t) for t in trees)
        self._stats["tokens_used"] += used
        self._stats["depth"] += d
        self._stats["width"] += w
        if doc is not None:
            doc["iteration"] = self.iteration
            self.plans.append(doc)
        outcome = IterationOutcome(self.iteration, start, len(trees), d, w, used, cost, accepted,
                                   [l.rid for l in done], doc)
        self.iteration += 1
        return outcome

    def run_to_completion(self) -> None:
        while self.pending or self.active:
            self.step()

    def report(self, config_echo: Mapping[str, Any] | None = None, **extras) -> RunReport:
        its = max(self.iteration, 1)
        summary = {
            "iterations": self.iteration,
            "mean_tokens_used": self._stats["tokens_used"] / its,
            "mean_depth": self._stats["depth"] / its,
            "mean_width": self._stats["width"] / its,
            "final_clock_s": self.clock,
        }
        if self.cfg.record_plans:
            extras["plans"] = self.plans
        return RunReport.build(self.completed, dict(config_echo or {}), self.seed, self.policy.name,
                               engine=summary, **extras)


def run(specs: Sequence[RequestSpec], policy: SchedulerPolicy, cfg: EngineConfig, target: TokenModel,
        draft: TokenModel, seed: int, config_echo: Mapping[str, Any] | None = None, **extras) -> RunReport:
    eng = Engine(policy, cfg, target, draft, seed)
    eng.submit(specs)
    eng.run_to_completion()
    return eng.report(config_echo, **extras)
