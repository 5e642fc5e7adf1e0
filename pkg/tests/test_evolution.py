import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmevo import evolution as E
from swarmevo import grammar as g
from swarmevo.world import EnvConfig


def result(p_s, T_s, p=10, T=10, n=2, R=3):
    z = np.zeros((n, R))
    return E.OperationResult(p_s, p, T_s, T, np.zeros(n), z, z, z, z.astype(int))


def test_fitness_examples():
    assert E.compute_fitness(result(0, 10)) == -1.0
    assert E.compute_fitness(result(10, 5)) == 0.5
    assert E.compute_fitness(result(50, 100, p=100, T=100)) == -0.5
    with pytest.raises(ValueError):
        result(11, 3)


class Scripted:
    """Stand-in operation returning queued (p_s, T_s) outcomes."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = 0

    def __call__(self, rule_sets, instance, rng):
        self.calls += 1
        p_s, t_s = self.outcomes.pop(0)
        return result(p_s, t_s, n=len(rule_sets), R=len(rule_sets[0]))


def _tiny_solution():
    return E.random_solution(np.random.default_rng(0), 2, 3)


@pytest.mark.parametrize("outcomes, kappa, fit, count", [
    ([(0, 2)], 3, -0.2, 1),                 # fit <= 0: a single operation
    ([(7, 3), (5, 3)], 2, 0.3, 2),          # 0.4, 0.2 -> mean, capped at kappa
    ([(7, 3), (2, 8)], 3, -0.1, 2),         # 0.4, -0.6 -> running mean -0.1 stops
    ([(7, 3), (7, 3), (7, 3)], 3, 0.4, 3),
])
def test_kappa_reevaluation(outcomes, kappa, fit, count):
    op = Scripted(outcomes)
    sol = E.evaluate(_tiny_solution(), None, kappa, np.random.default_rng(0), operation=op)
    assert sol.fitness == pytest.approx(fit, abs=1e-12)
    assert sol.evaluation_count == count == op.calls


def test_split_examples():
    rng = np.random.default_rng(0)
    assert E.split_quality([3, 1, 2], rng) == ([0, 2], [1])
    assert E.split_quality([0, 0, 5], rng) == ([2], [0, 1])
    hq, lq = E.split_quality([2, 2, 2], rng)
    assert len(lq) == 1 and sorted(hq + lq) == [0, 1, 2]


def test_donor_probabilities():
    assert E.donor_probabilities([0, 1], [4, 1]).tolist() == [0.8, 0.2]
    assert E.donor_probabilities([3], [0, 0, 0, 7]).tolist() == [1.0]
    assert E.donor_probabilities([0, 1], [0, 0]).tolist() == [0.5, 0.5]


def test_donor_roulette_frequencies():
    rng = np.random.default_rng(1)
    n = 20000
    picks = np.array([E.select_donor([0, 2], [4, 0, 1], rng) for _ in range(n)])
    share = (picks == 0).mean()
    assert abs(share - 0.8) <= 3 * math.sqrt(0.8 * 0.2 / n)


def test_keep_and_import_examples():
    assert E.keep_count(100, 0.6, 0, 10) == 30
    assert E.import_count(100, 30, 0.5) == 35
    assert E.keep_count(100, -1.0, 0, 10) == 0
    assert E.keep_count(100, 3.0, 0, 10) == 100
    assert E.keep_count(100, 0.6, 2, 10) == 10
    assert E.import_count(100, 0, 0.0) == 0


def _stat_rule_set(rng, size, err_levels=5):
    rs = g.random_rule_set(rng, size)
    for r in rs:
        r.error = float(rng.integers(err_levels)) / err_levels      # ties on purpose
        r.strength = float(rng.integers(-3, 4))
    return rs


def _ident(r):
    return r.condition_genome, r.action_genome


def oracle_counts(size, fit, phi, varrho, u):
    frac = min(1.0, max(0.0, fit / 2 - phi / varrho))
    kept = math.floor(round(size * frac, 9))
    return kept, math.floor((size - kept) * u)


def test_crossover_accounting_1000():
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        size = int(rng.integers(1, 40))
        lq = _stat_rule_set(rng, size)
        donor = _stat_rule_set(rng, size)
        fit = float(rng.uniform(-1, 2.5))
        phi = int(rng.integers(0, 6))
        varrho = float(rng.choice([5.0, 10.0, 20.0]))
        peek = np.random.default_rng()
        peek.bit_generator.state = rng.bit_generator.state
        kept_n, imp_n = oracle_counts(size, fit, phi, varrho, peek.random())
        out = E.crossover(lq, donor, fit, phi, varrho, rng)
        tags = [r.origin for r in out]
        assert tags.count("kept") == kept_n and tags.count("donor") == imp_n
        assert kept_n + imp_n <= size and len(out) == size
        assert all(r.q == r.strength == r.error == 0 and r.uses == 0 for r in out)
        # kept rules are the lowest-error lq rules, imported ones the strongest donor rules
        by_id = {_ident(r): r for r in lq}
        kept_err = sorted(by_id[_ident(r)].error for r in out if r.origin == "kept")
        assert kept_err == sorted(r.error for r in lq)[:kept_n]
        by_id = {_ident(r): r for r in donor}
        imp_str = sorted((by_id[_ident(r)].strength for r in out if r.origin == "donor"), reverse=True)
        assert imp_str == sorted((r.strength for r in donor), reverse=True)[:imp_n]


def test_crossover_boundaries():
    rng = np.random.default_rng(3)
    lq, donor = _stat_rule_set(rng, 50), _stat_rule_set(rng, 50)
    out = E.crossover(lq, donor, -1.0, 0, 10.0, rng)
    assert [r.origin for r in out].count("kept") == 0
    out = E.crossover(lq, donor, 0.6, 0, 10.0, rng, exchange=False)
    tags = [r.origin for r in out]
    assert tags.count("donor") == 0 and tags.count("kept") == 15
    with pytest.raises(ValueError):
        E.crossover(lq, donor[:10], 0.0, 0, 10.0, rng)


def _evaluated(contrib, fitness=0.2, size=8, seed=0):
    rng = np.random.default_rng(seed)
    sol = E.random_solution(rng, len(contrib), size)
    for rs in sol.rule_sets:
        for r in rs:
            r.q, r.error, r.strength = 1.0, float(rng.random()), float(rng.random())
    sol.fitness = fitness
    sol.contributions = np.asarray(contrib, dtype=float)
    return sol


def test_evolve_replaces_only_lq_sets():
    sol = _evaluated([3, 1, 2])
    child = E.evolve(sol, np.random.default_rng(0), E.EvolutionConfig(rule_set_size=8))
    replaced = [all(r.q == 0 for r in rs) for rs in child.rule_sets]
    assert replaced == [False, True, False]
    # untouched sets are copies, not shared objects
    assert child.rule_sets[0][0] is not sol.rule_sets[0][0]
    assert child.rule_sets[0][0].key == sol.rule_sets[0][0].key


def test_evolve_forced_demotion_replaces_one():
    sol = _evaluated([2, 2, 2])
    child = E.evolve(sol, np.random.default_rng(1), E.EvolutionConfig(rule_set_size=8))
    assert sum(all(r.q == 0 for r in rs) for rs in child.rule_sets) == 1


def test_evolve_increments_phi():
    sol = _evaluated([3, 1, 2])
    sol.phi = 2
    E.evolve(sol, np.random.default_rng(0), E.EvolutionConfig(rule_set_size=8))
    assert sol.phi == 3


def test_evolve_single_agent_uses_own_set():
    sol = _evaluated([5])
    child = E.evolve(sol, np.random.default_rng(0), E.EvolutionConfig(rule_set_size=8))
    assert len(child.rule_sets[0]) == 8


def test_evolve_requires_evaluation():
    sol = E.random_solution(np.random.default_rng(0), 2, 3)
    with pytest.raises(ValueError):
        E.evolve(sol, np.random.default_rng(0), E.EvolutionConfig())


# -- persistence ---------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(g.VARIANTS))
def test_solution_text_round_trip(seed, variant):
    rng = np.random.default_rng(seed)
    sol = E.random_solution(rng, int(rng.integers(1, 5)), int(rng.integers(1, 12)), variant)
    for rs in sol.rule_sets:
        for r in rs:
            r.q, r.strength, r.error = rng.normal(size=3)
            r.uses = float(rng.random() * 7)
            r.origin = str(rng.choice(["kept", "donor", "random"]))
    sol.fitness = float(rng.uniform(-1, 1))
    sol.contributions = rng.random(sol.n_agents) * 9
    sol.phi, sol.insertion_index, sol.evaluation_count = 4, 17, 2
    text = E.dumps_solution(sol, variant)
    back, v = E.loads_solution(text)
    assert v == variant and E.dumps_solution(back, v) == text
    assert back.fitness == sol.fitness and back.phi == 4 and back.insertion_index == 17
    assert np.array_equal(back.contributions, sol.contributions)
    for a, b in zip(sol.rule_sets, back.rule_sets):
        for x, y in zip(a, b):
            assert x.key == y.key and x.condition_genome == y.condition_genome
            assert (x.q, x.strength, x.error, x.uses, x.origin) == (y.q, y.strength, y.error, y.uses, y.origin)


def test_solution_text_rejects_tampering(tmp_path):
    sol = E.random_solution(np.random.default_rng(0), 1, 2)
    text = E.dumps_solution(sol)
    lines = text.splitlines()
    lines[-1] = lines[-1].rsplit(" ; ", 1)[0] + " ; has_packet => idle"
    with pytest.raises(ValueError):
        E.loads_solution("\n".join(lines))
    with pytest.raises(ValueError):
        E.loads_solution(text.replace("swarmevo-solution 1", "swarmevo-solution 9"))
    path = tmp_path / "s.txt"
    E.save_solution(path, sol)
    assert E.load_solution(path)[0].rule_sets[0][0].key == sol.rule_sets[0][0].key


# -- fitness against an independent recount of the event log ------------------

def recount(events, p, T):
    delivered = sum(1 for ev in events for _src, dst, _pid in ev["transfers"]
                    if dst == len(ev["held"]) + 1)
    return delivered / p - len(events) / T


@pytest.mark.parametrize("seed", range(20))
def test_fitness_matches_event_log(seed):
    env = EnvConfig(env_type=("open", "jammed", "urban", "urban_jammed")[seed % 4],
                    swarm_size=6, distance=80.0, time_limit=300, packets=20,
                    margin=400.0, half_height=500.0)
    inst = E.Instance.from_seed(env, seed)
    rng = np.random.default_rng(seed)
    rule_sets = [g.random_rule_set(rng, 40) for _ in range(6)]
    res = E.run_operation_for(rule_sets, inst, rng, log_events=True)
    assert E.compute_fitness(res) == recount(res.events, env.packets, env.T)
    assert res.events[-1]["delivered"] == res.p_s
