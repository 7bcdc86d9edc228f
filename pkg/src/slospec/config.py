"""Run configuration: a single JSON document, validated into dataclasses.

Every resolved default is echoed back into reports so runs are unambiguous.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .engine import AdaptiveConfig, EngineConfig, LatencyModel, RequestSpec, SchedulerPolicy, requests_from_trace
from .lm_sim import LmOracle, TableOracle
from .workload import (SloCategory, UnsortedTraceWarning, categories_from_json, categories_to_json,
                       default_categories, gen_trace, load_trace)


class ConfigError(ValueError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass
class OracleConfig:
    vocab_size: int = 32
    seed: int = 1234
    sharpness: float = 3.0
    drift: float = 0.1
    window: int = 4
    draft_table: dict | None = None
    target_table: dict | None = None


@dataclass
class WorkloadConfig:
    rps: list = field(default_factory=lambda: [[0.0, 4.0]])
    duration: float = 60.0
    mix: list | None = None
    category_profiles: dict | None = None


@dataclass
class RunConfig:
    policy: str = "slo-customized"
    seed: int = 0
    budget: int = 128
    n_max: int | None = None
    max_active: int | None = 32
    fixed_depth: int | None = None
    fixed_width: int | None = None
    adaptive: AdaptiveConfig | None = None
    latency: LatencyModel = field(default_factory=LatencyModel)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    categories: Any = None
    trace: str | None = None
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    requests: list | None = None
    record_plans: bool = False
    out: str | None = None

    def engine_config(self) -> EngineConfig:
        return EngineConfig(self.latency, self.adaptive or AdaptiveConfig(b1=self.budget), self.budget,
                            self.n_max, self.fixed_depth, self.fixed_width, self.max_active,
                            self.record_plans)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        if self.adaptive is None and self.fixed_depth is None:
            d["adaptive"] = dataclasses.asdict(AdaptiveConfig(b1=self.budget))
        return d


def _build(cls, doc: Any, name: str):
    if doc is None:
        return cls()
    if not isinstance(doc, Mapping):
        raise ConfigError(name, "expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown field")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


_INT_FIELDS = ("seed", "budget", "n_max", "max_active", "fixed_depth", "fixed_width")


def parse_config(doc: Mapping[str, Any]) -> RunConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown field")
    for key in _INT_FIELDS:
        v = doc.get(key)
        if v is not None and (not isinstance(v, int) or isinstance(v, bool)):
            raise ConfigError(key, "expected an integer")
    has_fixed = doc.get("fixed_depth") is not None or doc.get("fixed_width") is not None
    if has_fixed and doc.get("adaptive") is not None:
        raise ConfigError("adaptive", "fixed depth/width and adaptive control are mutually exclusive")

    kw = {k: v for k, v in doc.items() if k not in ("adaptive", "latency", "oracle", "workload")}
    cfg = RunConfig(**kw)
    cfg.adaptive = _build(AdaptiveConfig, doc["adaptive"], "adaptive") if doc.get("adaptive") is not None else None
    cfg.latency = _build(LatencyModel, doc.get("latency"), "latency")
    cfg.oracle = _build(OracleConfig, doc.get("oracle"), "oracle")
    cfg.workload = _build(WorkloadConfig, doc.get("workload"), "workload")
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    try:
        SchedulerPolicy.parse(cfg.policy)
    except ValueError as exc:
        raise ConfigError("policy", str(exc)) from None
    try:
        cfg.engine_config()
    except ValueError as exc:
        raise ConfigError("engine", str(exc)) from None
    if cfg.fixed_depth is not None and cfg.adaptive is not None:
        raise ConfigError("adaptive", "fixed depth/width and adaptive control are mutually exclusive")
    try:
        make_oracles(cfg)
    except ValueError as exc:
        raise ConfigError("oracle", str(exc)) from None
    if cfg.workload.duration <= 0:
        raise ConfigError("workload.duration", "must be positive")


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON at line {exc.lineno}") from None
    return parse_config(doc)


def _table(doc: Mapping, name: str) -> TableOracle:
    try:
        table = {tuple(e["context"]): e["probs"] for e in doc["table"]}
        return TableOracle(int(doc["vocab_size"]), table)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"oracle.{name}", f"malformed table ({exc})") from None


def make_oracles(cfg: RunConfig):
    o = cfg.oracle
    if o.target_table is not None:
        target = _table(o.target_table, "target_table")
        draft = _table(o.draft_table, "draft_table") if o.draft_table is not None else target
        return target, draft
    target = LmOracle(o.vocab_size, o.seed, o.sharpness, window=o.window)
    return target, target.draft(o.drift)


def make_categories(cfg: RunConfig) -> list[SloCategory]:
    base = cfg.latency.baseline_latency
    cats = cfg.categories
    try:
        if cats is None:
            mix = cfg.workload.mix or (0.6, 0.2, 0.2)
            return default_categories(base, mix)
        if isinstance(cats, str):
            cats = json.loads(Path(cats).read_text(encoding="utf-8"))
        return categories_from_json(cats, base)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError("categories", str(exc)) from None


def make_requests(cfg: RunConfig, categories: list[SloCategory], trace_path: str | None = None,
                  flags: dict | None = None) -> list[RequestSpec]:
    """Explicit requests, a trace file, or a generated trace, in that order of precedence."""
    if cfg.requests is not None:
        try:
            return [RequestSpec(float(r["arrival_time_s"]), r.get("category", "explicit"), float(r["tpot_slo"]),
                                len(r["prompt"]), int(r["output_len"]), tuple(r["prompt"]))
                    for r in cfg.requests]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("requests", f"malformed request ({exc})") from None
    path = trace_path or cfg.trace
    if path is not None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", UnsortedTraceWarning)
            try:
                trace = load_trace(path, [c.name for c in categories])
            except OSError as exc:
                raise ConfigError("trace", f"cannot read {path}: {exc.strerror}") from None
            except ValueError as exc:
                raise ConfigError("trace", str(exc)) from None
        if flags is not None:
            flags["trace_resorted"] = any(issubclass(w.category, UnsortedTraceWarning) for w in caught)
    else:
        trace = generate(cfg, categories)
    return requests_from_trace(trace, categories)


def generate(cfg: RunConfig, categories: list[SloCategory]):
    w = cfg.workload
    try:
        return gen_trace(categories, [tuple(seg) for seg in w.rps], w.duration, cfg.seed,
                         {k: [tuple(s) for s in v] for k, v in (w.category_profiles or {}).items()})
    except ValueError as exc:
        raise ConfigError("workload", str(exc)) from None


def echo(cfg: RunConfig, categories: list[SloCategory]) -> dict[str, Any]:
    d = cfg.to_dict()
    d["resolved_categories"] = categories_to_json(categories)
    return d
