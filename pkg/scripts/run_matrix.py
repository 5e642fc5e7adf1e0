"""Every algorithm on every environment type and range, then the summary table.

Long: at desk scale one (algorithm, env, range) cell with 10 seeds takes
several minutes. Pass ``--profile full`` for the full-length setting.

    python3 scripts/run_matrix.py --seeds 0..9 --out results/matrix
"""
import argparse
import sys

from swarmevo import cli


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", default="0..9")
    ap.add_argument("--generations", default="50")
    ap.add_argument("--profile", default="desk", choices=("desk", "full"))
    ap.add_argument("--workers", default="1")
    ap.add_argument("--out", default="results/matrix")
    args = ap.parse_args()
    rc = cli.main(["evolve", "-v", "--env", "open,jammed,urban,urban_jammed", "--range", "short,long",
                   "--algo", "slcs2,slcs2_no_novelty,slcs2_no_exchange,vf_baseline",
                   "--seeds", args.seeds, "--generations", args.generations,
                   "--profile", args.profile, "--workers", args.workers, "--out", args.out])
    if rc:
        sys.exit(rc)
    cli.main(["stats", "--in", args.out])


if __name__ == "__main__":
    main()
