"""Per-request SLO quantities: the acceptance deficit and its depth cap."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class RequestState:
    """One in-flight request as the schedulers see it.

    ``decode_latency`` is the simulated time elapsed since the request's first
    decoding step; prefill is not part of it.
    """

    id: int
    tpot_slo: float
    sequence: list[int]
    prompt_len: int
    remaining_output: int
    decode_latency: float = 0.0
    category: str = ""
    arrival_time: float = 0.0
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def emitted(self) -> int:
        return len(self.sequence) - self.prompt_len

    @property
    def last_token(self) -> int:
        return self.sequence[-1]


def slo_deficit(decode_latency: float, emitted: int, tpot_slo: float, t_spec: float) -> float:
    """Tokens this iteration must accept to keep average TPOT on target.

    Negative when the request is ahead of pace.
    """
    if tpot_slo <= 0 or t_spec <= 0:
        raise ValueError("tpot_slo and t_spec must be positive")
    return (decode_latency + t_spec) / tpot_slo - emitted


def request_deficit(req: RequestState, t_spec: float) -> float:
    return slo_deficit(req.decode_latency, req.emitted, req.tpot_slo, t_spec)


def slo_deficit_capped(deficit: float, depth: int) -> float:
    """Clamp to what a depth-``depth`` tree can deliver, floored at zero."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    return max(0.0, min(deficit, depth + 1.0))
