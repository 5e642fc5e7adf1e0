"""Fitness-novelty Pareto archive.

``x`` dominates ``y`` when ``e(x, y) = f(x) - f(y) - omega * db(x, y) > 0``;
``db`` is the index-aligned rule-overlap distance between two solutions and
``omega = omega0 / max(1, |Y|)`` shrinks as the archive grows.
"""
from __future__ import annotations

import json

import numpy as np

from .evolution import Solution


def rule_set_distance(keys_x, keys_y, n_x: int, n_y: int, rules_x, rules_y) -> float:
    """Fraction of rules (counted in both sets) with no structural twin in the other set."""
    if n_x + n_y == 0:
        return 0.0
    miss = sum(1 for r in rules_x if r.key not in keys_y)
    miss += sum(1 for r in rules_y if r.key not in keys_x)
    return miss / (n_x + n_y)


def behavior_distance(x: Solution, y: Solution) -> float:
    if x.n_agents != y.n_agents:
        raise ValueError("solutions have different swarm sizes")
    if x.n_agents == 0:
        return 0.0
    kx, ky = x.keys(), y.keys()
    total = 0.0
    for i in range(x.n_agents):
        rx, ry = x.rule_sets[i], y.rule_sets[i]
        total += rule_set_distance(kx[i], ky[i], len(rx), len(ry), rx, ry)
    return total / x.n_agents


def domination_effect(x: Solution, y: Solution, omega: float, db: float | None = None) -> float:
    if db is None:
        db = behavior_distance(x, y)
    return x.fitness - y.fitness - omega * db


class NoveltyArchive:
    """Unbounded archive kept mutually non-dominated under the current omega."""

    def __init__(self, omega0: float = 0.5):
        if omega0 < 0:
            raise ValueError("omega0 must be >= 0")
        self.omega0 = omega0
        self.members: list[Solution] = []
        self._dist = np.zeros((0, 0))      # pairwise behaviour distance among members
        self._counter = 0
        self.removed = 0

    def __len__(self):
        return len(self.members)

    @property
    def omega(self) -> float:
        return self.omega0 / max(1, len(self.members))

    def _fitness(self) -> np.ndarray:
        return np.array([m.fitness for m in self.members], dtype=float)

    def _drop(self, idx):
        idx = sorted(set(idx))
        keep = [i for i in range(len(self.members)) if i not in set(idx)]
        self.members = [self.members[i] for i in keep]
        self._dist = self._dist[np.ix_(keep, keep)]
        self.removed += len(idx)

    def update(self, x: Solution) -> bool:
        """Offer ``x``; returns True when it was inserted (it may be pruned again by cleanup)."""
        if x.fitness is None:
            raise ValueError("solution must be evaluated")
        omega = self.omega
        f = self._fitness()
        d = np.array([behavior_distance(x, m) for m in self.members])
        if len(self.members) and np.any(f - x.fitness - omega * d > 0):
            return False
        # members dominated by x leave
        out = np.flatnonzero(x.fitness - f - omega * d > 0) if len(f) else np.zeros(0, dtype=int)
        x.insertion_index = self._counter
        self._counter += 1
        n = len(self.members)
        dist = np.zeros((n + 1, n + 1))
        dist[:n, :n] = self._dist
        dist[n, :n] = dist[:n, n] = d
        self.members.append(x)
        self._dist = dist
        if len(out):
            self._drop(out)
        self._cleanup()
        return True

    def _cleanup(self):
        # a larger archive means a smaller omega, which can turn ties into dominations;
        # remove the weakest dominated member until the archive is consistent again
        while len(self.members) > 1:
            e = self.effects()
            dominated = (e > 0).any(axis=0)
            if not dominated.any():
                return
            f = self._fitness()
            cand = np.flatnonzero(dominated)
            self._drop([cand[np.argmin(f[cand])]])

    def effects(self) -> np.ndarray:
        """Matrix e[i, j] = e(member i, member j) under the current omega."""
        f = self._fitness()
        e = f[:, None] - f[None, :] - self.omega * self._dist
        np.fill_diagonal(e, 0.0)
        return e

    def consistent(self) -> bool:
        return bool(len(self.members) < 2 or (self.effects() <= 0).all())

    def select_next(self) -> Solution:
        if not self.members:
            raise ValueError("archive is empty")
        return min(self.members, key=lambda m: (m.phi, m.insertion_index))

    def best(self) -> Solution:
        return max(self.members, key=lambda m: (m.fitness, -m.insertion_index))

    def snapshot(self, generation: int) -> dict:
        n = len(self.members)
        if n > 1:
            d = self._dist + np.diag(np.full(n, np.inf))
            nearest = d.min(axis=1).tolist()
        else:
            nearest = [None] * n
        return {
            "generation": generation,
            "memberCount": n,
            "omega": self.omega,
            "members": [{"index": m.insertion_index, "fitness": m.fitness, "phi": m.phi,
                         "nearest": nearest[i]} for i, m in enumerate(self.members)],
        }


def write_snapshots(path, snapshots):
    with open(path, "w") as fh:
        for s in snapshots:
            fh.write(json.dumps(s) + "\n")
