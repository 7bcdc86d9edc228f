"""SLO attainment, goodput and run report serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

# relative slack so an exactly-on-target TPOT is not lost to float accumulation
_BOUNDARY_RTOL = 1e-9

CSV_COLUMNS = ["request_id", "category", "arrival_s", "first_decode_s", "completion_s",
               "emitted", "avg_tpot_s", "slo_met"]


@dataclass
class RequestRecord:
    request_id: int
    category: str
    tpot_slo: float
    arrival_s: float
    first_decode_s: float
    completion_s: float
    emitted: int
    decode_latency: float
    verifications: int = 0
    accepted_total: int = 0

    @property
    def avg_tpot(self) -> float:
        return self.decode_latency / self.emitted

    @property
    def queueing_delay(self) -> float:
        return self.first_decode_s - self.arrival_s

    @property
    def slo_met(self) -> bool:
        return judge_request(self.decode_latency, self.emitted, self.tpot_slo)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.update(avg_tpot_s=self.avg_tpot, queueing_delay_s=self.queueing_delay, slo_met=self.slo_met)
        return d


def judge_request(decode_latency: float, emitted: int, tpot_slo: float) -> bool:
    """Average per-token decode latency no greater than the TPOT target."""
    if emitted < 1:
        raise ValueError("a judged request must have emitted at least one token")
    return decode_latency / emitted <= tpot_slo * (1.0 + _BOUNDARY_RTOL)


def aggregate(records: Sequence[RequestRecord], makespan: float) -> dict[str, Any]:
    """Attainment and goodput over completed requests, overall and per category."""

    def summarize(rs: Sequence[RequestRecord]) -> dict[str, Any]:
        met = [r for r in rs if r.slo_met]
        total_tokens = sum(r.emitted for r in rs)
        good_tokens = sum(r.emitted for r in met)
        return {
            "requests": len(rs),
            "slo_met": len(met),
            "slo_attainment": len(met) / len(rs) if rs else 0.0,
            "goodput_tok_s": good_tokens / makespan if makespan > 0 else 0.0,
            "throughput_tok_s": total_tokens / makespan if makespan > 0 else 0.0,
            "emitted_tokens": total_tokens,
        }

    out = summarize(records)
    verifs = sum(r.verifications for r in records)
    out["mean_accepted_per_verify"] = (
        sum(r.accepted_total for r in records) / verifs if verifs else 0.0)
    out["makespan_s"] = makespan
    cats = sorted({r.category for r in records})
    out["per_category"] = {c: summarize([r for r in records if r.category == c]) for c in cats}
    return out


def makespan_of(records: Sequence[RequestRecord]) -> float:
    if not records:
        return 0.0
    return max(r.completion_s for r in records) - min(r.arrival_s for r in records)


@dataclass
class RunReport:
    records: list[RequestRecord]
    aggregates: dict[str, Any]
    config: dict[str, Any]
    seed: int
    policy: str
    extras: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def build(cls, records, config, seed, policy, **extras) -> "RunReport":
        records = sorted(records, key=lambda r: r.request_id)
        return cls(records, aggregate(records, makespan_of(records)), config, seed, policy, extras)

    @property
    def slo_attainment(self) -> float:
        return self.aggregates["slo_attainment"]

    @property
    def goodput(self) -> float:
        return self.aggregates["goodput_tok_s"]

    @property
    def mean_accepted(self) -> float:
        return self.aggregates["mean_accepted_per_verify"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "policy": self.policy,
            "seed": self.seed,
            "config": self.config,
            "aggregates": self.aggregates,
            "requests": [r.to_dict() for r in self.records],
            **self.extras,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([r.request_id, r.category, repr(r.arrival_s), repr(r.first_decode_s),
                        repr(r.completion_s), r.emitted, repr(r.avg_tpot), int(r.slo_met)])
        return buf.getvalue()


def check_report(report: RunReport) -> None:
    agg = report.aggregates
    assert 0.0 <= agg["slo_attainment"] <= 1.0
    assert agg["goodput_tok_s"] <= agg["throughput_tok_s"] + 1e-12
    assert math.isfinite(agg["makespan_s"])
