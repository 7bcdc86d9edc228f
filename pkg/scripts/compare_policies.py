"""Compare all policies on the saturating mixed workload over several seeds."""

import argparse
from concurrent.futures import ProcessPoolExecutor

from slospec.cli import execute
from slospec.config import load_config

POLICIES = ["slo-customized", "continuous-batching", "fixed-spec-1", "fixed-spec-3", "fixed-spec-5"]


def point(job):
    path, policy, seed = job
    cfg = load_config(path)
    cfg.policy, cfg.seed = policy, seed
    return policy, seed, execute(cfg).aggregates


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/mixed.json")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--jobs", type=int, default=4)
    args = ap.parse_args()
    jobs = [(args.config, p, s) for s in range(args.seeds) for p in POLICIES]
    with ProcessPoolExecutor(args.jobs) as pool:
        rows = list(pool.map(point, jobs))
    print(f"{'policy':>22} {'seed':>4} {'attainment':>10} {'goodput':>9} {'accepted':>8}")
    for policy, seed, a in rows:
        print(f"{policy:>22} {seed:>4} {a['slo_attainment']:>10.3f} {a['goodput_tok_s']:>9.1f} "
              f"{a['mean_accepted_per_verify']:>8.3f}")


if __name__ == "__main__":
    main()
