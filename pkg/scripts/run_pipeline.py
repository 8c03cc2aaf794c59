"""Run gen -> train -> explain -> combine -> anchor -> transform -> report into one directory."""
import argparse
import sys

from silentxai.cli import STAGES, run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="run")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", help="JSON RunConfig overrides")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--stages", default=",".join(STAGES), help="comma-separated subset, in order")
    args = ap.parse_args()
    common = ["--out", args.out, "--seed", str(args.seed), "--threads", str(args.threads)]
    if args.config:
        common += ["--config", args.config]
    sys.exit(run_pipeline(common, tuple(s for s in args.stages.split(",") if s)))


if __name__ == "__main__":
    main()
