"""Full method against its no-novelty and no-exchange ablations on one profile.

    python3 scripts/run_ablation.py --seeds 0..9 --out results/ablation
"""
import argparse
import os

import numpy as np

from swarmevo.cli import parse_seeds
from swarmevo.experiment import ExperimentSpec, desk_env, run_experiment, write_results
from swarmevo.stats import mann_whitney


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=parse_seeds, default=list(range(10)))
    ap.add_argument("--generations", type=int, default=50)
    ap.add_argument("--env", default="open")
    ap.add_argument("--range", default="short")
    ap.add_argument("--algos", default="slcs2,slcs2_no_novelty,slcs2_no_exchange")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/ablation")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    finals = {}
    for algo in args.algos.split(","):
        spec = ExperimentSpec(env=desk_env(args.env, args.range), seeds=args.seeds,
                              generations=args.generations, algorithm=algo)
        records = run_experiment(spec, args.workers)
        write_results(os.path.join(args.out, "results.csv"), records)
        finals[algo] = [r.best_fitness for r in records]
        print(f"{algo}: median final fitness {np.median(finals[algo]):.4f}")
    base = finals.get("slcs2")
    for algo, xs in finals.items():
        if algo == "slcs2" or base is None:
            continue
        _, p = mann_whitney(base, xs, "greater")
        print(f"slcs2 vs {algo}: median {np.median(base):.4f} vs {np.median(xs):.4f}, "
              f"one-sided Mann-Whitney p={p:.3f}")


if __name__ == "__main__":
    main()
