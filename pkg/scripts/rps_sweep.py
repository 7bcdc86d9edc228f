"""Mean accepted tokens per verification and attainment as the arrival rate grows."""

import argparse

from slospec.cli import main as cli_main


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/mixed.json")
    ap.add_argument("--rps", default="0.25,2,6,12")
    ap.add_argument("--policies", default="slo-customized,continuous-batching")
    ap.add_argument("--out", default="out/sweep")
    ap.add_argument("--jobs", type=int, default=4)
    args = ap.parse_args()
    raise SystemExit(cli_main(["sweep", "--config", args.config, "--rps", args.rps, "--policies", args.policies,
                               "--out", args.out, "--jobs", str(args.jobs)]))


if __name__ == "__main__":
    main()
