"""Command-line front end: run, compare, sweep, gen-trace, oracle.

Exit codes: 0 success, 1 oracle mismatch, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import engine
from .config import ConfigError, RunConfig, echo, load_config, make_categories, make_oracles, make_requests
from .optimal_sched import brute_force_optimal, construct_optimal, truncated_inf_tree
from .lm_sim import LmOracle
from .token_tree import TokenTree
from .workload import save_trace

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "policy", None):
        cfg.policy = args.policy
    fixed = getattr(args, "fixed_depth", None) is not None or getattr(args, "fixed_width", None) is not None
    if fixed and (getattr(args, "adaptive", False) or cfg.adaptive is not None):
        raise ConfigError("--fixed-depth", "fixed depth/width and adaptive control are mutually exclusive")
    if fixed:
        cfg.fixed_depth, cfg.fixed_width = args.fixed_depth, args.fixed_width
    if getattr(args, "adaptive", False) and cfg.fixed_depth is not None:
        raise ConfigError("--adaptive", "fixed depth/width and adaptive control are mutually exclusive")
    if getattr(args, "adaptive", False) and cfg.adaptive is None:
        cfg.adaptive = engine.AdaptiveConfig(b1=cfg.budget)
    try:
        cfg.engine_config()
        engine.SchedulerPolicy.parse(cfg.policy)
    except ValueError as exc:
        raise ConfigError("config", str(exc)) from None
    return cfg


def execute(cfg: RunConfig, trace_path: str | None = None):
    """Run one configuration end to end and return its report."""
    categories = make_categories(cfg)
    flags: dict = {}
    specs = make_requests(cfg, categories, trace_path, flags)
    target, draft = make_oracles(cfg)
    policy = engine.SchedulerPolicy.parse(cfg.policy)
    try:
        return engine.run(specs, policy, cfg.engine_config(), target, draft, cfg.seed,
                          echo(cfg, categories), **flags)
    except engine.MalformedTraceError as exc:
        raise ConfigError("trace", str(exc)) from None


def _write_report(report, out: Path, stem: str = "report") -> None:
    _atomic_write(out / f"{stem}.json", report.to_json() + "\n")
    _atomic_write(out / f"{stem}_requests.csv", report.to_csv())


def _out_dir(cfg: RunConfig, args) -> Path:
    return Path(args.out or cfg.out or "out")


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    report = execute(cfg, args.trace)
    _write_report(report, _out_dir(cfg, args))
    agg = report.aggregates
    print(f"{report.policy}: {agg['requests']} requests, attainment {agg['slo_attainment']:.3f}, "
          f"goodput {agg['goodput_tok_s']:.1f} tok/s, mean accepted {agg['mean_accepted_per_verify']:.3f}")
    return EXIT_OK


def _shared_trace(cfg: RunConfig, trace_path: str | None, out: Path) -> str:
    if trace_path or cfg.trace:
        return trace_path or cfg.trace
    from .config import generate
    path = out / "trace.jsonl"
    out.mkdir(parents=True, exist_ok=True)
    save_trace(generate(cfg, make_categories(cfg)), path)
    return str(path)


def _summary_row(report) -> dict:
    a = report.aggregates
    return {"policy": report.policy, "slo_attainment": a["slo_attainment"], "goodput_tok_s": a["goodput_tok_s"],
            "mean_accepted": a["mean_accepted_per_verify"], "requests": a["requests"]}


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        _atomic_write(path, "")
        return
    import io
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _configs_for_compare(args) -> list[RunConfig]:
    cfgs = [_apply_overrides(load_config(p), args) for p in args.config]
    if args.policies:
        base = cfgs[0]
        cfgs = [dataclasses.replace(base, policy=p) for p in args.policies.split(",")]
        for c in cfgs:
            _apply_overrides(c, argparse.Namespace())
    return cfgs


def _run_point(job):
    cfg, trace = job
    return execute(cfg, trace)


def _map(jobs, n_jobs: int):
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_run_point, jobs))
    return [_run_point(j) for j in jobs]


def cmd_compare(args) -> int:
    cfgs = _configs_for_compare(args)
    out = Path(args.out or cfgs[0].out or "out")
    trace = _shared_trace(cfgs[0], args.trace, out)
    reports = _map([(c, trace) for c in cfgs], args.jobs)
    rows = []
    for rep in reports:
        _write_report(rep, out, f"report_{rep.policy}")
        rows.append(_summary_row(rep))
    _write_csv(out / "compare.csv", rows)
    for r in rows:
        print(f"{r['policy']:>22}  attainment {r['slo_attainment']:.3f}  goodput {r['goodput_tok_s']:8.1f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfgs = _configs_for_compare(args)
    out = Path(args.out or cfgs[0].out or "out")
    try:
        rates = [float(x) for x in args.rps.split(",")]
    except ValueError:
        raise ConfigError("--rps", "expected comma-separated numbers") from None
    if any(r < 0 or not math.isfinite(r) for r in rates):
        raise ConfigError("--rps", "rates must be finite and >= 0")
    jobs, keys = [], []
    for rate in rates:
        for c in cfgs:
            wl = dataclasses.replace(c.workload, rps=[[0.0, rate]])
            jobs.append((dataclasses.replace(c, workload=wl), args.trace))
            keys.append(rate)
    reports = _map(jobs, args.jobs)
    rows = []
    for rate, rep in zip(keys, reports):
        _write_report(rep, out, f"report_rps{rate:g}_{rep.policy}")
        a = rep.aggregates
        rows.append({"rps": rate, "policy": rep.policy, "attainment": a["slo_attainment"],
                     "goodput": a["goodput_tok_s"], "mean_accepted": a["mean_accepted_per_verify"]})
    _write_csv(out / "sweep.csv", rows)
    for r in rows:
        print(f"rps {r['rps']:>6g} {r['policy']:>22}  attainment {r['attainment']:.3f}  "
              f"goodput {r['goodput']:8.1f}  accepted {r['mean_accepted']:.3f}")
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.rps is not None:
        cfg.workload.rps = [[0.0, args.rps]]
    if args.duration is not None:
        cfg.workload.duration = args.duration
    from .config import generate
    records = generate(cfg, make_categories(cfg))
    path = Path(args.out or "trace.jsonl")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_trace(records, path)
    print(f"wrote {len(records)} records to {path}")
    return EXIT_OK


def load_instance(path: str | Path):
    """Small optimality instance: explicit trees, or an oracle spec to truncate.

    ``{"budget": B, "deficits": [...], "trees": [tree docs]}`` or
    ``{"budget": B, "deficits": [...], "oracle": {vocab_size, seed, sharpness},
    "contexts": [[...], ...], "depth": D}``.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        budget, deficits = int(doc["budget"]), [float(a) for a in doc["deficits"]]
        if "trees" in doc:
            trees = [TokenTree.from_dict(t) for t in doc["trees"]]
        else:
            o = doc["oracle"]
            target = LmOracle(int(o["vocab_size"]), int(o["seed"]), float(o.get("sharpness", 1.0)))
            trees = [truncated_inf_tree(target, ctx, int(doc["depth"])) for ctx in doc["contexts"]]
    except OSError as exc:
        raise ConfigError("--instance", f"cannot read {path}: {exc.strerror}") from None
    except (KeyError, TypeError, ValueError, AssertionError) as exc:
        raise ConfigError("--instance", f"malformed instance ({exc})") from None
    return trees, deficits, budget


def cmd_oracle(args) -> int:
    trees, deficits, budget = load_instance(args.instance)
    try:
        greedy = construct_optimal(trees, deficits, budget)
        brute = brute_force_optimal(trees, deficits, budget)
    except ValueError as exc:
        raise ConfigError("--instance", str(exc)) from None
    fmt = lambda p: f"{p.objective!r}" if p.valid else "INVALID"
    agree = greedy.valid == brute.valid and (not greedy.valid or greedy.objective == brute.objective)
    print(f"greedy:      {fmt(greedy)}")
    print(f"brute force: {fmt(brute)}")
    print("agree" if agree else "MISMATCH")
    return EXIT_OK if agree else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slospec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi=False):
        if multi:
            p.add_argument("--config", required=True, action="append", help="config JSON (repeatable)")
        else:
            p.add_argument("--config", required=True, help="config JSON")
        p.add_argument("--trace", help="JSONL trace overriding the config's workload")
        p.add_argument("--seed", type=int, help="run seed (overrides config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--policy", help="scheduler policy override")
        p.add_argument("--fixed-depth", type=int, help="fixed speculation depth (disables adaptive control)")
        p.add_argument("--fixed-width", type=int, help="fixed beam width (disables adaptive control)")
        p.add_argument("--adaptive", action="store_true", help="force adaptive depth/width control")

    p = sub.add_parser("run", help="simulate one configuration")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several policies on one shared trace")
    common(p, multi=True)
    p.add_argument("--policies", help="comma-separated policies applied to the first config")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="sweep constant arrival rates")
    common(p, multi=True)
    p.add_argument("--rps", required=True, help="comma-separated arrival rates")
    p.add_argument("--policies", help="comma-separated policies applied to the first config")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-trace", help="write a synthetic JSONL trace")
    p.add_argument("--config", help="config JSON supplying categories and workload")
    p.add_argument("--seed", type=int)
    p.add_argument("--rps", type=float, help="constant arrival rate")
    p.add_argument("--duration", type=float, help="trace length in seconds")
    p.add_argument("--out", help="output JSONL path")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("oracle", help="check greedy optimality against brute force on a small instance")
    p.add_argument("--instance", required=True, help="instance JSON")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
