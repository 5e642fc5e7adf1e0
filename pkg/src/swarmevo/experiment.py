"""Experiment orchestration: the evolve/evaluate/archive loop per instance seed."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agents import LearningConfig
from .archive import NoveltyArchive, write_snapshots
from .baseline import VirtualForceSwarm
from .evolution import (EvolutionConfig, Instance, Solution, evaluate, evolve,
                        random_solution, run_operation_for, save_solution)
from .world import RANGES, EnvConfig, World, run_operation

ALGORITHMS = ("slcs2", "slcs2_no_novelty", "slcs2_no_exchange", "vf_baseline")
DESK_T = {"short": 4000, "long": 8000}

CSV_FIELDS = ["spec_hash", "env", "range", "seed", "algo", "best_fitness", "initial_fitness",
              "generations_run", "evaluations", "wall_clock"]


@dataclass
class ExperimentSpec:
    env: EnvConfig = field(default_factory=EnvConfig)
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    generations: int = 50
    algorithm: str = "slcs2"
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    omega0: float = 0.5

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("instance seeds must be distinct")
        if self.omega0 < 0:
            raise ValueError("omega0 must be >= 0")

    @property
    def kappa(self) -> int:
        return self.evolution.kappa

    def to_dict(self) -> dict:
        return {
            "env": self.env.to_dict(),
            "seeds": list(self.seeds),
            "generations": self.generations,
            "algorithm": self.algorithm,
            "evolution": dataclasses.asdict(self.evolution),
            "learning": dataclasses.asdict(self.learning),
            "omega0": self.omega0,
        }

    def spec_hash(self) -> str:
        """Hash of everything except the seed list, so runs of one spec group together."""
        d = self.to_dict()
        d.pop("seeds")
        return hashlib.sha1(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        env = d.pop("env", {})
        env = env if isinstance(env, EnvConfig) else EnvConfig.from_dict(env)
        evo = d.pop("evolution", {})
        evo = evo if isinstance(evo, EvolutionConfig) else EvolutionConfig(**evo)
        lrn = d.pop("learning", {})
        lrn = lrn if isinstance(lrn, LearningConfig) else LearningConfig.from_dict(lrn)
        return cls(env=env, evolution=evo, learning=lrn, **d)


def desk_env(env_type: str = "open", env_range: str = "short", **kw) -> EnvConfig:
    """Environment with the scaled-down time limit used for quick runs."""
    kw.setdefault("time_limit", DESK_T[env_range])
    return EnvConfig(env_type=env_type, env_range=env_range, **kw)


@dataclass
class RunRecord:
    spec_hash: str
    env: str
    range: str
    seed: int
    algorithm: str
    trajectory: list[float]       # best-so-far fitness after generation g (index 0 = initial)
    initial_fitness: float
    best_fitness: float
    generations_run: int
    evaluations: int
    wall_clock: float
    best: Solution | None = None
    snapshots: list = field(default_factory=list)
    event_log: str | None = None
    origins: dict = field(default_factory=dict)   # provenance tag counts over all offspring rules

    def row(self) -> dict:
        return {"spec_hash": self.spec_hash, "env": self.env, "range": self.range,
                "seed": self.seed, "algo": self.algorithm, "best_fitness": repr(self.best_fitness),
                "initial_fitness": repr(self.initial_fitness),
                "generations_run": self.generations_run, "evaluations": self.evaluations,
                "wall_clock": f"{self.wall_clock:.3f}"}


def _count_origins(sol: Solution, counts: dict):
    for rs in sol.rule_sets:
        for r in rs:
            counts[r.origin] = counts.get(r.origin, 0) + 1


def run_instance(spec: ExperimentSpec, seed: int) -> RunRecord:
    if spec.algorithm == "vf_baseline":
        return vf_baseline(spec, seed)
    t0 = time.perf_counter()
    instance = Instance.from_seed(spec.env, seed, spec.learning)
    rng = np.random.default_rng([seed, 1])
    cfg = spec.evolution
    if spec.algorithm == "slcs2_no_exchange":
        cfg = dataclasses.replace(cfg, exchange=False)
    novelty = spec.algorithm != "slcs2_no_novelty"

    sol = random_solution(rng, spec.env.swarm_size, cfg.rule_set_size, cfg.variant, cfg.genome_len)
    evaluate(sol, instance, cfg.kappa, rng)
    evaluations = sol.evaluation_count
    initial = sol.fitness
    best_so_far, best = sol.fitness, sol
    trajectory = [best_so_far]
    archive = NoveltyArchive(spec.omega0)
    snapshots = []
    origins: dict = {}
    if novelty:
        archive.update(sol)
        snapshots.append(archive.snapshot(0))
    current = sol
    for gen in range(1, spec.generations + 1):
        parent = archive.select_next() if novelty else current
        child = evolve(parent, rng, cfg)
        _count_origins(child, origins)
        evaluate(child, instance, cfg.kappa, rng)
        evaluations += child.evaluation_count
        if novelty:
            archive.update(child)
            snapshots.append(archive.snapshot(gen))
        elif child.fitness > current.fitness:
            current = child
        if child.fitness > best_so_far:
            best_so_far, best = child.fitness, child
        trajectory.append(best_so_far)
    return RunRecord(spec.spec_hash(), spec.env.env_type, spec.env.env_range, seed,
                     spec.algorithm, trajectory, initial, best_so_far, spec.generations,
                     evaluations, time.perf_counter() - t0, best, snapshots, origins=origins)


def _vf_world(spec: ExperimentSpec, seed: int, log_events: bool = False) -> World:
    instance = Instance.from_seed(spec.env, seed, spec.learning)
    world = World(instance.env, instance.layout, np.random.default_rng([seed, 1]),
                  log_events=log_events)
    return run_operation(world, VirtualForceSwarm())


def vf_baseline(spec: ExperimentSpec, seed: int) -> RunRecord:
    """One operation of the hand-written virtual-force swarm on the instance layout."""
    t0 = time.perf_counter()
    world = _vf_world(spec, seed)
    fit = world.delivered / world.p - world.t / world.T
    return RunRecord(spec.spec_hash(), spec.env.env_type, spec.env.env_range, seed,
                     "vf_baseline", [fit], fit, fit, 0, 1, time.perf_counter() - t0)


def replay_best(record: RunRecord, spec: ExperimentSpec, path) -> str:
    """Run the best solution once more with event logging and write the JSONL log."""
    if record.algorithm == "vf_baseline":
        _vf_world(spec, record.seed, log_events=True).write_events(path)
    else:
        instance = Instance.from_seed(spec.env, record.seed, spec.learning)
        rng = np.random.default_rng([record.seed, 2])
        res = run_operation_for(record.best.rule_sets, instance, rng, log_events=True)
        with open(path, "w") as fh:
            for ev in res.events:
                fh.write(json.dumps(ev) + "\n")
    record.event_log = str(path)
    return str(path)


def _run(args):
    spec, seed = args
    return run_instance(spec, seed)


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list[RunRecord]:
    jobs = [(spec, s) for s in spec.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_run, jobs))
    return [_run(j) for j in jobs]


def write_results(path, records: list[RunRecord]):
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if new:
            w.writeheader()
        for r in records:
            w.writerow(r.row())


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def save_record_artifacts(record: RunRecord, spec: ExperimentSpec, out_dir, events: bool = False):
    """Archive snapshots, best solution text and (optionally) an event log for one run."""
    stem = f"{record.algorithm}_{record.env}_{record.range}_s{record.seed}"
    os.makedirs(out_dir, exist_ok=True)
    if record.snapshots:
        write_snapshots(os.path.join(out_dir, f"archive_{stem}.jsonl"), record.snapshots)
    if record.best is not None:
        save_solution(os.path.join(out_dir, f"best_{stem}.txt"), record.best, spec.evolution.variant)
    if events:
        replay_best(record, spec, os.path.join(out_dir, f"events_{stem}.jsonl"))
    with open(os.path.join(out_dir, f"trajectory_{stem}.json"), "w") as fh:
        json.dump({"seed": record.seed, "algo": record.algorithm, "trajectory": record.trajectory,
                   "spec_hash": record.spec_hash, "spec": spec.to_dict()}, fh)


def default_range_T(env_range: str, profile: str) -> int:
    return RANGES[env_range][1] if profile == "full" else DESK_T[env_range]
