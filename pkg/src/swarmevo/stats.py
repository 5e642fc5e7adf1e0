"""Rank tests and confidence intervals used to compare algorithms."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

EXACT_MAX = 8
_TOL = 1e-9


def _midranks(pooled: np.ndarray) -> np.ndarray:
    return sps.rankdata(pooled, method="average")


def u_statistic(a, b) -> float:
    """U of sample ``a``: pairs with a > b plus half the ties."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ranks = _midranks(np.concatenate([a, b]))
    return float(ranks[: len(a)].sum() - len(a) * (len(a) + 1) / 2)


def exact_u_counts(pooled_ranks, n_a: int) -> tuple[dict[float, int], int]:
    """Null distribution of U for ``n_a`` labels drawn from the given pooled midranks.

    Returns ``({u: number of labellings}, total labellings)``. Dynamic programme
    over doubled midranks (integers) counting subsets by size and rank sum;
    counts stay integer while they fit in int64.
    """
    r2 = np.rint(2 * np.asarray(pooled_ranks, dtype=float)).astype(np.int64)
    width = int(np.sort(r2)[::-1][:n_a].sum()) + 1
    denom = math.comb(len(r2), n_a)
    dtype = np.int64 if denom < 2 ** 62 else np.float64
    ways = np.zeros((n_a + 1, width), dtype=dtype)
    ways[0, 0] = 1
    for r in r2:
        if r < width:
            ways[1:, r:] += ways[:-1, : width - r].copy()
    counts = ways[n_a]
    offset = n_a * (n_a + 1)       # doubled n_a (n_a + 1) / 2
    return {(int(s) - offset) / 2: counts[s].item() for s in np.flatnonzero(counts)}, denom


def _exact_p(u, counts, denom, mean, alternative):
    if alternative == "two-sided":
        dev = abs(u - mean)
        hits = sum(c for v, c in counts.items() if abs(v - mean) >= dev - _TOL)
    elif alternative == "greater":
        hits = sum(c for v, c in counts.items() if v >= u - _TOL)
    else:
        hits = sum(c for v, c in counts.items() if v <= u + _TOL)
    return hits / denom


def mann_whitney(a, b, alternative: str = "two-sided") -> tuple[float, float]:
    """U of ``a`` and its p-value.

    Exact null distribution (ties handled through midranks) when the smaller
    sample has at most ``EXACT_MAX`` values, else the normal approximation with
    tie and continuity corrections. ``alternative='greater'`` tests a > b.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError("alternative must be two-sided, greater or less")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 1 or len(b) < 1:
        raise ValueError("both samples need at least one value")
    n1, n2 = len(a), len(b)
    pooled = np.concatenate([a, b])
    u = u_statistic(a, b)
    mean = n1 * n2 / 2
    if np.all(pooled == pooled[0]):
        return u, 1.0
    if min(n1, n2) <= EXACT_MAX:
        ranks = _midranks(pooled)
        if n1 <= n2:
            counts, denom = exact_u_counts(ranks, n1)
        else:
            # U of a is n1 * n2 minus U of b; enumerate over the smaller sample
            counts, denom = exact_u_counts(ranks, n2)
            counts = {n1 * n2 - v: c for v, c in counts.items()}
        return u, min(1.0, _exact_p(u, counts, denom, mean, alternative))
    n = n1 + n2
    _, tie_counts = np.unique(pooled, return_counts=True)
    var = n1 * n2 / 12 * ((n + 1) - (tie_counts ** 3 - tie_counts).sum() / (n * (n - 1)))
    sd = math.sqrt(var)
    if alternative == "two-sided":
        z = (abs(u - mean) - 0.5) / sd
        return u, min(1.0, 2 * sps.norm.sf(max(z, 0.0)))
    if alternative == "greater":
        return u, float(sps.norm.sf((u - mean - 0.5) / sd))
    return u, float(sps.norm.cdf((u - mean + 0.5) / sd))


def permutation_p(a, b, alternative: str = "two-sided") -> float:
    """Brute-force p by relabelling every subset of the pooled sample (small n only)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    n1 = len(a)
    base = n1 * (n1 + 1) / 2
    u_obs = ranks[:n1].sum() - base
    mean = n1 * len(b) / 2
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), n1):
        u = ranks[list(idx)].sum() - base
        total += 1
        if alternative == "two-sided":
            hits += abs(u - mean) >= abs(u_obs - mean) - _TOL
        elif alternative == "greater":
            hits += u >= u_obs - _TOL
        else:
            hits += u <= u_obs + _TOL
    return hits / total


def t_interval(x, level: float = 0.90) -> tuple[float, float, float]:
    """Mean and Student-t confidence interval."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two values")
    m = float(x.mean())
    half = float(sps.t.ppf(0.5 + level / 2, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x)))
    return m, m - half, m + half


@dataclass
class Cell:
    algorithm: str
    env: str
    n: int
    mean: float
    lo: float
    hi: float


@dataclass
class Comparison:
    env: str
    first: str
    second: str
    p: float
    verdict: str                # "<winner> significantly superior", "... non-significantly superior", "tie"


def verdict(a: Cell, b: Cell, p: float, alpha: float = 0.1) -> str:
    if a.mean == b.mean:
        return "tie"
    win, lose = (a, b) if a.mean > b.mean else (b, a)
    disjoint = win.lo > lose.hi
    if disjoint and p < alpha:
        return f"{win.algorithm} significantly superior"
    return f"{win.algorithm} non-significantly superior"


def summarize(samples: dict[tuple[str, str], list[float]], pairs=None, level: float = 0.90):
    """Cells per (algorithm, env), pairwise comparisons per env and overall means per algorithm.

    ``samples`` maps (algorithm, env) to per-instance final fitness values.
    """
    cells = {}
    for (alg, env), xs in sorted(samples.items()):
        m, lo, hi = t_interval(xs, level)
        cells[alg, env] = Cell(alg, env, len(xs), m, lo, hi)
    algs = sorted({k[0] for k in samples})
    envs = sorted({k[1] for k in samples})
    if pairs is None:
        pairs = list(itertools.combinations(algs, 2))
    comps = []
    for env in envs:
        for x, y in pairs:
            if (x, env) not in cells or (y, env) not in cells:
                continue
            _, p = mann_whitney(samples[x, env], samples[y, env])
            comps.append(Comparison(env, x, y, p, verdict(cells[x, env], cells[y, env], p)))
    overall = {a: float(np.mean([cells[a, e].mean for e in envs if (a, e) in cells])) for a in algs}
    return list(cells.values()), comps, overall
