"""Solution evaluation and Lamarckian offspring generation.

A solution is an ordered list of rule-sets, one per agent. Evaluation runs
one or more swarm operations on a fixed instance layout; evolution replaces
the rule-sets of low-contribution agents with a mix of their own low-error
rules, high-strength rules copied from a high-contribution donor, and fresh
random rules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import grammar as g
from .agents import LearningConfig, RuleSwarm
from .world import EnvConfig, Layout, World, generate_layout, run_operation

RULE_SET_SIZE = 100


@dataclass
class EvolutionConfig:
    rule_set_size: int = RULE_SET_SIZE
    varrho: float = 10.0          # weight of the exploration counter in the keep fraction
    kappa: int = 3                # maximum evaluations of a solution with fit > 0
    variant: str = "standard"
    genome_len: int = g.GENOME_LEN
    exchange: bool = True         # import donor rules; False leaves the gap to random rules

    def __post_init__(self):
        if self.rule_set_size < 1:
            raise ValueError("rule_set_size must be >= 1")
        if self.varrho <= 0:
            raise ValueError("varrho must be positive")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.variant not in g.VARIANTS:
            raise ValueError(f"variant must be one of {g.VARIANTS}")


@dataclass(eq=False)
class Solution:
    rule_sets: list[list[g.Rule]]
    fitness: float | None = None
    contributions: np.ndarray | None = None
    evaluation_count: int = 0
    phi: int = 0
    insertion_index: int = -1
    parent: int | None = None

    @property
    def n_agents(self) -> int:
        return len(self.rule_sets)

    def keys(self) -> list[frozenset]:
        """Structural rule identities per agent, cached (rule-sets are not mutated after creation)."""
        cached = getattr(self, "_keys", None)
        if cached is None:
            cached = [frozenset(r.key for r in rs) for rs in self.rule_sets]
            self._keys = cached
        return cached


def random_solution(rng: np.random.Generator, n_agents: int, size: int = RULE_SET_SIZE,
                    variant: str = "standard", genome_len: int = g.GENOME_LEN) -> Solution:
    return Solution([g.random_rule_set(rng, size, variant, genome_len) for _ in range(n_agents)])


# --------------------------------------------------------------------------
# Evaluation

@dataclass
class Instance:
    """A problem instance: environment config plus its fixed static layout."""
    env: EnvConfig
    layout: Layout
    learning: LearningConfig = field(default_factory=LearningConfig)

    @classmethod
    def from_seed(cls, env: EnvConfig, seed: int, learning: LearningConfig | None = None):
        layout = generate_layout(env, np.random.default_rng([seed, 0]))
        return cls(env, layout, learning or LearningConfig())


@dataclass
class OperationResult:
    p_s: int
    p: int
    T_s: int
    T: int
    contributions: np.ndarray
    q: np.ndarray               # (agents, rules) final learning statistics
    strength: np.ndarray
    error: np.ndarray
    uses: np.ndarray
    events: list | None = None

    def __post_init__(self):
        if not 0 <= self.p_s <= self.p:
            raise ValueError("delivered packets out of range")
        if not 0 <= self.T_s <= self.T:
            raise ValueError("steps out of range")


def compute_fitness(res: OperationResult) -> float:
    if res.p <= 0 or res.T <= 0:
        raise ValueError("p and T must be positive")
    return res.p_s / res.p - res.T_s / res.T


def run_operation_for(rule_sets, instance: Instance, rng: np.random.Generator,
                      log_events: bool = False) -> OperationResult:
    """One deployment of a swarm driven by ``rule_sets``; learning state starts from zero."""
    world = World(instance.env, instance.layout, rng, log_events=log_events)
    swarm = RuleSwarm(rule_sets, instance.learning)
    run_operation(world, swarm)
    swarm.finish()
    return OperationResult(world.delivered, world.p, world.t, world.T,
                           world.contributions.copy(), swarm.q, swarm.strength,
                           swarm.error, swarm.uses, world.events)


def evaluate(solution: Solution, instance: Instance, kappa: int, rng: np.random.Generator,
             operation=run_operation_for) -> Solution:
    """Run operations until the running mean fitness is <= 0 or ``kappa`` runs are done.

    Each run uses fresh stochastic draws on the same layout. Means of fitness,
    contributions and per-rule statistics are written back to the solution.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    fits, results = [], []
    while True:
        res = operation(solution.rule_sets, instance, rng)
        results.append(res)
        fits.append(compute_fitness(res))
        if np.mean(fits) <= 0 or len(fits) >= kappa:
            break
    k = len(results)
    solution.fitness = float(np.mean(fits))
    solution.evaluation_count = k
    solution.contributions = np.mean([r.contributions for r in results], axis=0)
    q = np.mean([r.q for r in results], axis=0)
    strength = np.mean([r.strength for r in results], axis=0)
    error = np.mean([r.error for r in results], axis=0)
    uses = np.mean([r.uses for r in results], axis=0)
    for i, rs in enumerate(solution.rule_sets):
        for j, rule in enumerate(rs):
            rule.q = float(q[i, j])
            rule.strength = float(strength[i, j])
            rule.error = float(error[i, j])
            rule.uses = float(uses[i, j])
    return solution


# --------------------------------------------------------------------------
# Offspring

def split_quality(contributions, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """hq = agents contributing at least the mean, lq the rest (never empty)."""
    c = np.asarray(contributions, dtype=float)
    if c.size == 0:
        raise ValueError("need at least one agent")
    mean = c.mean()
    hq = [i for i in range(len(c)) if c[i] >= mean]
    lq = [i for i in range(len(c)) if c[i] < mean]
    if not lq:
        demoted = int(rng.integers(len(hq)))
        lq = [hq.pop(demoted)]
    return hq, lq


def donor_probabilities(hq, contributions) -> np.ndarray:
    w = np.asarray([contributions[i] for i in hq], dtype=float)
    if len(w) == 0:
        raise ValueError("hq is empty")
    if w.sum() <= 0:
        return np.full(len(w), 1.0 / len(w))
    return w / w.sum()


def select_donor(hq, contributions, rng: np.random.Generator) -> int:
    """Roulette-wheel pick over hq proportional to contribution."""
    if len(hq) == 0:
        # every agent was demoted (single-agent swarm); nothing to copy from
        raise ValueError("hq is empty")
    p = donor_probabilities(hq, contributions)
    return int(hq[int(rng.choice(len(hq), p=p))])


def keep_count(size: int, fit: float, phi: int, varrho: float) -> int:
    frac = min(1.0, max(0.0, fit / 2.0 - phi / varrho))
    # small epsilon guards products like 100 * 0.3 = 30.000000000000004 vs 29.999999999999996
    return int(math.floor(size * frac + 1e-9))


def import_count(size: int, kept: int, u: float) -> int:
    return int(math.floor((size - kept) * u))


def _lowest(values, k):
    """Indices of the k smallest values; ties go to the lower index."""
    order = sorted(range(len(values)), key=lambda i: (values[i], i))
    return order[:k]


def crossover(lq_set, donor_set, fit: float, phi: int, varrho: float, rng: np.random.Generator,
              variant: str = "standard", exchange: bool = True,
              genome_len: int = g.GENOME_LEN) -> list[g.Rule]:
    """Offspring rule-set: kept low-error lq rules, imported high-strength donor rules, randoms.

    Every rule carries an ``origin`` tag (kept / donor / random) and fresh
    learning statistics.
    """
    size = len(lq_set)
    if len(donor_set) != size:
        raise ValueError("rule-sets must have equal size")
    kept = keep_count(size, fit, phi, varrho)
    u = rng.random()
    imported = import_count(size, kept, u) if exchange else 0
    keep_idx = sorted(_lowest([r.error for r in lq_set], kept))
    donor_idx = _lowest([-r.strength for r in donor_set], imported)
    out = [lq_set[i].fresh_copy("kept") for i in keep_idx]
    out += [donor_set[i].fresh_copy("donor") for i in donor_idx]
    for _ in range(size - kept - imported):
        r = g.random_rule(rng, variant, genome_len)
        out.append(r)
    return out


def evolve(solution: Solution, rng: np.random.Generator, cfg: EvolutionConfig) -> Solution:
    """Offspring of an evaluated solution. Increments the parent's exploration counter."""
    if solution.fitness is None or solution.contributions is None:
        raise ValueError("solution must be evaluated before evolving")
    child = Solution([[r.copy() for r in rs] for rs in solution.rule_sets],
                     parent=solution.insertion_index)
    if solution.n_agents == 0:
        solution.phi += 1
        return child
    hq, lq = split_quality(solution.contributions, rng)
    for i in lq:
        if not hq:
            donor_set = solution.rule_sets[i]
        else:
            donor_set = solution.rule_sets[select_donor(hq, solution.contributions, rng)]
        child.rule_sets[i] = crossover(solution.rule_sets[i], donor_set, solution.fitness,
                                       solution.phi, cfg.varrho, rng, cfg.variant,
                                       cfg.exchange, cfg.genome_len)
    solution.phi += 1
    return child


# --------------------------------------------------------------------------
# Text persistence

FORMAT_VERSION = 1


def _fmt_float(x) -> str:
    return "none" if x is None else repr(float(x))


def _parse_float(s):
    return None if s == "none" else float(s)


def dumps_solution(sol: Solution, variant: str = "standard") -> str:
    lines = [f"swarmevo-solution {FORMAT_VERSION}",
             f"variant {variant}",
             f"fitness {_fmt_float(sol.fitness)}",
             f"evaluations {sol.evaluation_count}",
             f"phi {sol.phi}",
             f"insertion {sol.insertion_index}",
             "contributions " + ("none" if sol.contributions is None
                                 else " ".join(repr(float(c)) for c in sol.contributions)),
             f"agents {len(sol.rule_sets)}"]
    for i, rs in enumerate(sol.rule_sets):
        lines.append(f"agent {i} {len(rs)}")
        for r in rs:
            uses = int(r.uses) if isinstance(r.uses, (int, np.integer)) else float(r.uses)
            stats = (f"q={float(r.q)!r} strength={float(r.strength)!r} "
                     f"error={float(r.error)!r} uses={uses!r} origin={r.origin}")
            lines.append(" ; ".join([" ".join(map(str, r.condition_genome)),
                                     " ".join(map(str, r.action_genome)), stats, str(r)]))
    return "\n".join(lines) + "\n"


def loads_solution(text: str) -> tuple[Solution, str]:
    lines = text.splitlines()
    it = iter(lines)

    def field_(name):
        key, _, value = next(it).partition(" ")
        if key != name:
            raise ValueError(f"expected {name!r}, got {key!r}")
        return value

    head = next(it).split()
    if head[0] != "swarmevo-solution" or int(head[1]) != FORMAT_VERSION:
        raise ValueError("not a solution file of a supported version")
    variant = field_("variant")
    fitness = _parse_float(field_("fitness"))
    evaluations = int(field_("evaluations"))
    phi = int(field_("phi"))
    insertion = int(field_("insertion"))
    contrib = field_("contributions")
    contributions = None if contrib == "none" else np.array([float(c) for c in contrib.split()])
    n_agents = int(field_("agents"))
    rule_sets = []
    for i in range(n_agents):
        idx, size = map(int, field_("agent").split())
        if idx != i:
            raise ValueError("agents out of order")
        rs = []
        for _ in range(size):
            cg, ag, stats, text_ = next(it).split(" ; ", 3)
            rule = g.rule_from_genomes([int(d) for d in cg.split()],
                                       [int(d) for d in ag.split()], variant)
            if str(rule) != text_:
                raise ValueError(f"rule text does not match its genome: {text_!r}")
            kv = dict(item.split("=", 1) for item in stats.split())
            rule.q = float(kv["q"])
            rule.strength = float(kv["strength"])
            rule.error = float(kv["error"])
            uses = kv["uses"]
            rule.uses = float(uses) if "." in uses or "e" in uses else int(uses)
            rule.origin = kv["origin"]
            rs.append(rule)
        rule_sets.append(rs)
    sol = Solution(rule_sets, fitness, contributions, evaluations, phi, insertion)
    return sol, variant


def save_solution(path, sol: Solution, variant: str = "standard"):
    with open(path, "w") as fh:
        fh.write(dumps_solution(sol, variant))


def load_solution(path) -> tuple[Solution, str]:
    with open(path) as fh:
        return loads_solution(fh.read())
