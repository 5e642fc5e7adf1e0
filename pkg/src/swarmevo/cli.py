"""Command line: ``evolve``, ``stats`` and ``replay``."""
from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys

from .agents import LearningConfig
from .evolution import EvolutionConfig
from .experiment import (ALGORITHMS, ExperimentSpec, default_range_T, run_experiment,
                         save_record_artifacts, write_results)
from .stats import mann_whitney, summarize
from .world import ENV_TYPES, RANGES, EnvConfig

log = logging.getLogger("swarmevo")


def parse_seeds(text: str) -> list[int]:
    """``0..9`` (inclusive), ``1,4,7`` or a mix such as ``0..2,10``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if len(set(out)) != len(out):
        raise argparse.ArgumentTypeError("seeds must be distinct")
    return out


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def build_specs(args) -> list[ExperimentSpec]:
    """One spec per (algorithm, env type, range); file config first, flags override."""
    cfg = load_config(args.config)
    env_cfg = dict(cfg.get("env", {}))
    for key in ("type", "range", "seed", "swarmSize", "radio"):
        if key in cfg:
            env_cfg[key] = cfg[key]
    evo = dict(cfg.get("evolution", {}))
    if "grammar" in cfg:
        evo["variant"] = cfg["grammar"]
    if "kappa" in cfg:
        evo["kappa"] = cfg["kappa"]
    if args.grammar:
        evo["variant"] = args.grammar
    if args.kappa is not None:
        evo["kappa"] = args.kappa
    learning = LearningConfig.from_dict(cfg.get("learning"))
    envs = _split(args.env) if args.env else [env_cfg.get("type", "open")]
    ranges = _split(args.range) if args.range else [env_cfg.get("range", "short")]
    algos = _split(args.algo) if args.algo else [cfg.get("algorithm", "slcs2")]
    if args.seeds is not None:
        seeds = args.seeds
    elif "seeds" in cfg:
        seeds = cfg["seeds"]
    elif "seed" in env_cfg:
        seeds = [env_cfg["seed"]]
    else:
        seeds = list(range(10))
    generations = args.generations or cfg.get("generations") or (500 if args.profile == "full" else 50)
    specs = []
    for algo in algos:
        if algo not in ALGORITHMS:
            raise SystemExit(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")
        for env_type in envs:
            for rng_name in ranges:
                d = dict(env_cfg, type=env_type, range=rng_name)
                if args.swarm_size is not None:
                    d["swarmSize"] = args.swarm_size
                if args.time_limit is not None:
                    d["time_limit"] = args.time_limit
                elif "time_limit" not in d:
                    d["time_limit"] = default_range_T(rng_name, args.profile)
                env = EnvConfig.from_dict(d)
                specs.append(ExperimentSpec(env=env, seeds=list(seeds), generations=generations,
                                            algorithm=algo, evolution=EvolutionConfig(**evo),
                                            learning=learning,
                                            omega0=cfg.get("omega0", 0.5)))
    return specs


def cmd_evolve(args) -> int:
    try:
        specs = build_specs(args)
    except (ValueError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    results = os.path.join(args.out, "results.csv")
    for spec in specs:
        log.info("running %s on %s/%s, seeds %s", spec.algorithm, spec.env.env_type,
                 spec.env.env_range, spec.seeds)
        records = run_experiment(spec, workers=args.workers)
        write_results(results, records)
        for rec in records:
            save_record_artifacts(rec, spec, args.out, events=args.events)
            log.info("seed %d: best %.4f (initial %.4f, %.1fs)", rec.seed, rec.best_fitness,
                     rec.initial_fitness, rec.wall_clock)
    print(results)
    return 0


def read_all_results(path: str) -> list[dict]:
    files = [path] if os.path.isfile(path) else sorted(glob.glob(os.path.join(path, "*.csv")))
    rows = []
    for f in files:
        with open(f, newline="") as fh:
            rows.extend(r for r in csv.DictReader(fh) if "best_fitness" in r)
    return rows


def cmd_stats(args) -> int:
    rows = read_all_results(args.inp)
    if not rows:
        print("no results found", file=sys.stderr)
        return 1
    samples: dict = {}
    for r in rows:
        samples.setdefault((r["algo"], f"{r['env']}/{r['range']}"), []).append(float(r["best_fitness"]))
    pairs = None
    if args.pairs:
        names = _split(args.pairs)
        pairs = [(names[i], names[j]) for i in range(len(names)) for j in range(i + 1, len(names))]
    usable = {k: v for k, v in samples.items() if len(v) >= 2}
    cells, comps, overall = summarize(usable, pairs)
    print("algorithm,env,n,mean,ci90_lo,ci90_hi")
    for c in cells:
        print(f"{c.algorithm},{c.env},{c.n},{c.mean:.4f},{c.lo:.4f},{c.hi:.4f}")
    print()
    print("env,first,second,p_two_sided,p_first_greater,verdict")
    for c in comps:
        _, p1 = mann_whitney(usable[c.first, c.env], usable[c.second, c.env], "greater")
        print(f"{c.env},{c.first},{c.second},{c.p:.4g},{p1:.4g},{c.verdict}")
    print()
    print("algorithm,overall_mean")
    for a, m in overall.items():
        print(f"{a},{m:.4f}")
    return 0


def cmd_replay(args) -> int:
    """Flatten a JSONL event log into a per-step, per-agent CSV for plotting."""
    with open(args.log) as fh, open(args.plotdata, "w", newline="") as out:
        w = csv.writer(out)
        w.writerow(["t", "agent", "x", "y", "held", "delivered", "at_source", "jam"])
        for line in fh:
            if not line.strip():
                continue
            ev = json.loads(line)
            jam = ";".join(str(j) for j in ev.get("jam", []))
            for i, ((x, y), h) in enumerate(zip(ev["pos"], ev["held"])):
                w.writerow([ev["t"], i, x, y, h, ev["delivered"], ev["at_source"], jam])
    print(args.plotdata)
    return 0


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="swarmevo", description=__doc__, parents=[common])
    sub = p.add_subparsers(dest="cmd", required=True)

    e = sub.add_parser("evolve", parents=[common], help="run the evolutionary loop over seeds")
    e.add_argument("--config", help="JSON config file (env keys, grammar, kappa, learning, ...)")
    e.add_argument("--env", help=f"comma list of {ENV_TYPES}")
    e.add_argument("--range", help=f"comma list of {tuple(RANGES)}")
    e.add_argument("--seeds", type=parse_seeds, help="e.g. 0..9 or 1,2,5")
    e.add_argument("--generations", type=int)
    e.add_argument("--grammar", choices=("standard", "channel", "power", "both"))
    e.add_argument("--algo", help=f"comma list of {ALGORITHMS}")
    e.add_argument("--kappa", type=int)
    e.add_argument("--swarm-size", type=int)
    e.add_argument("--time-limit", type=int, help="override T")
    e.add_argument("--profile", choices=("desk", "full"), default="desk",
                   help="desk: T=4000/8000 and 50 generations; full: T=20000/40000 and 500")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--events", action="store_true", help="write a JSONL event log of each best solution")
    e.add_argument("--out", default="results")
    e.set_defaults(func=cmd_evolve)

    s = sub.add_parser("stats", parents=[common], help="summarise results CSVs")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--pairs", help="comma list of algorithms to compare pairwise")
    s.set_defaults(func=cmd_stats)

    r = sub.add_parser("replay", parents=[common], help="turn an event log into plot data")
    r.add_argument("--log", required=True)
    r.add_argument("--plotdata", required=True)
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
