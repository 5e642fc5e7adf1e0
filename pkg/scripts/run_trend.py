"""Scaled evolution trend: best-so-far fitness per generation on open short range.

    python3 scripts/run_trend.py --seeds 0..4 --generations 50 --out results/trend
"""
import argparse
import json
import os

import numpy as np

from swarmevo.cli import parse_seeds
from swarmevo.experiment import ExperimentSpec, desk_env, run_experiment, save_record_artifacts


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=parse_seeds, default=list(range(5)))
    ap.add_argument("--generations", type=int, default=50)
    ap.add_argument("--env", default="open")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/trend")
    args = ap.parse_args()
    spec = ExperimentSpec(env=desk_env(args.env, "short"), seeds=args.seeds,
                          generations=args.generations)
    records = run_experiment(spec, args.workers)
    os.makedirs(args.out, exist_ok=True)
    for r in records:
        save_record_artifacts(r, spec, args.out)
        print(f"seed {r.seed}: {r.trajectory[0]:.4f} -> {r.trajectory[-1]:.4f} ({r.wall_clock:.0f}s)")
    traj = np.array([r.trajectory for r in records])
    improved = int((traj[:, -1] > traj[:, 0]).sum())
    print(f"improved in {improved}/{len(records)} seeds; median {np.median(traj[:, 0]):.4f} "
          f"-> {np.median(traj[:, -1]):.4f}")
    with open(os.path.join(args.out, "median_trajectory.json"), "w") as fh:
        json.dump(np.median(traj, axis=0).tolist(), fh)


if __name__ == "__main__":
    main()
