"""Multi-SLO request categories, synthetic Poisson traces and JSONL trace files."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class InvalidProfileError(ValueError):
    pass


class TraceParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class UnknownCategoryError(ValueError):
    pass


class UnsortedTraceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LengthDist:
    min: int
    mean: float
    max: int

    def __post_init__(self):
        if not (1 <= self.min <= self.mean <= self.max):
            raise ValueError(f"need 1 <= min <= mean <= max, got {self}")


@dataclass(frozen=True)
class SloCategory:
    name: str
    tpot_slo: float
    prompt_len: LengthDist
    output_len: LengthDist
    mix_weight: float

    def __post_init__(self):
        if self.tpot_slo <= 0:
            raise ValueError(f"{self.name}: tpot_slo must be positive")
        if not 0.0 <= self.mix_weight <= 1.0:
            raise ValueError(f"{self.name}: mix_weight must lie in [0, 1]")


@dataclass(frozen=True)
class TraceRecord:
    arrival_time: float
    category: str
    prompt_len: int
    output_len: int


def default_categories(baseline_latency: float, mix: Sequence[float] = (0.6, 0.2, 0.2)) -> list[SloCategory]:
    """Coding copilot / chatbot / summarization with their TPOT targets.

    The copilot target is 1.2x the idle single-request decode latency.
    """
    return [
        SloCategory("coding_copilot", 1.2 * baseline_latency,
                    LengthDist(32, 128, 512), LengthDist(16, 64, 256), mix[0]),
        SloCategory("chatbot", 0.050, LengthDist(16, 96, 512), LengthDist(32, 160, 512), mix[1]),
        SloCategory("summarization", 0.150, LengthDist(256, 1024, 4096), LengthDist(32, 96, 256), mix[2]),
    ]


def check_mix(categories: Sequence[SloCategory]) -> None:
    total = math.fsum(c.mix_weight for c in categories)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"category mix weights sum to {total}, expected 1")
    names = [c.name for c in categories]
    if len(set(names)) != len(names):
        raise ValueError("duplicate category names")


def categories_from_json(doc: Sequence[Mapping], baseline_latency: float) -> list[SloCategory]:
    """Parse category definitions.

    Each entry gives either ``tpot_slo`` (seconds) or ``tpot_baseline_multiple``.
    """
    cats = []
    for entry in doc:
        if "tpot_slo" in entry:
            tpot = float(entry["tpot_slo"])
        elif "tpot_baseline_multiple" in entry:
            tpot = float(entry["tpot_baseline_multiple"]) * baseline_latency
        else:
            raise ValueError(f"category {entry.get('name')!r} needs tpot_slo or tpot_baseline_multiple")
        cats.append(SloCategory(
            str(entry["name"]), tpot,
            LengthDist(**entry["prompt_len_dist"]), LengthDist(**entry["output_len_dist"]),
            float(entry["mix_weight"]),
        ))
    check_mix(cats)
    return cats


def categories_to_json(categories: Sequence[SloCategory]) -> list[dict]:
    return [
        {"name": c.name, "tpot_slo": c.tpot_slo, "prompt_len_dist": asdict(c.prompt_len),
         "output_len_dist": asdict(c.output_len), "mix_weight": c.mix_weight}
        for c in categories
    ]


@lru_cache(maxsize=64)
def _trunc_geom_cdf(lo: int, mean: float, hi: int) -> np.ndarray:
    """CDF over lo..hi of a geometric-shaped pmf (ratio r) with the given mean."""
    k = np.arange(hi - lo + 1, dtype=float)
    target = mean - lo
    if k.size == 1:
        return np.ones(1)

    def pmf(log_r):
        w = k * log_r
        w -= w.max()
        p = np.exp(w)
        return p / p.sum()

    # mean is increasing in log r; bracket wide enough for any lengths we use
    a, b = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if float(pmf(mid) @ k) < target:
            a = mid
        else:
            b = mid
    cdf = np.cumsum(pmf(0.5 * (a + b)))
    cdf[-1] = 1.0
    return cdf


def sample_lengths(dist: LengthDist, rng: np.random.Generator, size: int) -> np.ndarray:
    cdf = _trunc_geom_cdf(dist.min, float(dist.mean), dist.max)
    return dist.min + np.searchsorted(cdf, rng.random(size), side="right")


def length_mean(dist: LengthDist) -> float:
    cdf = _trunc_geom_cdf(dist.min, float(dist.mean), dist.max)
    pmf = np.diff(np.concatenate([[0.0], cdf]))
    return dist.min + float(pmf @ np.arange(len(pmf)))


Profile = Sequence[tuple[float, float]]


def _segments(profile: Profile, duration: float) -> list[tuple[float, float, float]]:
    if duration <= 0:
        raise InvalidProfileError("duration must be positive")
    if not profile:
        raise InvalidProfileError("empty rate profile")
    starts = [float(s) for s, _ in profile]
    if starts[0] != 0.0:
        raise InvalidProfileError("rate profile must start at t=0")
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise InvalidProfileError("segment start times must increase")
    segs = []
    for i, (start, rate) in enumerate(profile):
        if rate < 0 or not math.isfinite(rate):
            raise InvalidProfileError(f"segment {i}: rate must be finite and >= 0")
        end = starts[i + 1] if i + 1 < len(starts) else duration
        end = min(end, duration)
        if end > start:
            segs.append((float(start), end, float(rate)))
    return segs


def gen_trace(categories: Sequence[SloCategory], rps_profile: Profile, duration: float, seed: int,
              category_profiles: Mapping[str, Profile] | None = None) -> list[TraceRecord]:
    """Piecewise-constant Poisson arrivals split across categories.

    Each category's rate in a segment is ``segment rps * mix_weight`` unless
    ``category_profiles`` gives it its own rate profile.
    """
    check_mix(categories)
    rng = np.random.default_rng(seed)
    base = _segments(rps_profile, duration)
    records = []
    for c in categories:
        if category_profiles and c.name in category_profiles:
            segs = _segments(category_profiles[c.name], duration)
        else:
            segs = [(a, b, r * c.mix_weight) for a, b, r in base]
        times = []
        for start, end, rate in segs:
            count = rng.poisson(rate * (end - start))
            times.append(rng.uniform(start, end, count))
        t = np.sort(np.concatenate(times)) if times else np.empty(0)
        plen = sample_lengths(c.prompt_len, rng, len(t))
        olen = sample_lengths(c.output_len, rng, len(t))
        records.extend(TraceRecord(float(a), c.name, int(p), int(o)) for a, p, o in zip(t, plen, olen))
    order = {c.name: i for i, c in enumerate(categories)}
    records.sort(key=lambda r: (r.arrival_time, order[r.category]))
    return records


def save_trace(records: Iterable[TraceRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"arrival_time_s": r.arrival_time, "category": r.category,
                                 "prompt_len": r.prompt_len, "output_len": r.output_len}) + "\n")


_KEYS = {"arrival_time_s", "category", "prompt_len", "output_len"}


def load_trace(path: str | Path, categories: Iterable[str] | None = None) -> list[TraceRecord]:
    """Parse a JSONL trace.  Out-of-order input is sorted with an ``UnsortedTraceWarning``."""
    known = set(categories) if categories is not None else None
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise TraceParseError(lineno, "expected a JSON object")
            missing = _KEYS - obj.keys()
            if missing:
                raise TraceParseError(lineno, f"missing {', '.join(sorted(missing))}")
            t, cat, p, o = obj["arrival_time_s"], obj["category"], obj["prompt_len"], obj["output_len"]
            if not isinstance(t, (int, float)) or isinstance(t, bool) or t < 0 or not math.isfinite(t):
                raise TraceParseError(lineno, "arrival_time_s must be a non-negative number")
            for key, v in (("prompt_len", p), ("output_len", o)):
                if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                    raise TraceParseError(lineno, f"{key} must be a positive integer")
            if not isinstance(cat, str):
                raise TraceParseError(lineno, "category must be a string")
            if known is not None and cat not in known:
                raise UnknownCategoryError(f"line {lineno}: unknown category {cat!r}")
            records.append(TraceRecord(float(t), cat, p, o))
    if any(b.arrival_time < a.arrival_time for a, b in zip(records, records[1:])):
        warnings.warn(f"{path}: arrivals out of order, sorted on load", UnsortedTraceWarning, stacklevel=2)
        records.sort(key=lambda r: r.arrival_time)
    return records
