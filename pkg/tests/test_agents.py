import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from swarmevo import _kernels as K
from swarmevo import agents as A
from swarmevo import grammar as g
from swarmevo import world as W
from swarmevo.radio import RadioConfig


# -- reward and update rules -------------------------------------------------

def test_reward_examples():
    assert A.compute_reward(10.0, True, 0.0, 0.1) == pytest.approx(math.log10(11) - 0.1, abs=1e-12)
    assert A.compute_reward(0.0, False, 0.0, 0.1) == pytest.approx(-0.1, abs=1e-12)
    assert A.compute_reward(0.0, False, 5.0, 0.1) == pytest.approx(4.9, abs=1e-12)
    # moving a packet away from the sink is penalised symmetrically
    assert A.compute_reward(-10.0, True, 0.0, 0.0) == pytest.approx(-math.log10(11))


def test_q_update_examples():
    assert A.q_update(0.0, 1.0, 0.0, 0.5, 0.9) == 0.5
    assert A.q_update(0.7, 5.0, 3.0, 0.0, 0.9) == 0.7
    assert A.q_update(1.0, 1.0, 1.0, 0.5, 0.9) == pytest.approx(1.45)


def test_error_update_examples():
    assert A.error_update(0.0, 1.0, 0.0, 0.5) == 0.5
    assert A.error_update(0.3, 5.0, 1.0, 0.0) == 0.3
    e = 1.0
    for _ in range(50):
        e = A.error_update(e, 2.0, 2.0, 0.2)
    assert 0 < e < 1e-4


def test_strength_examples():
    m = np.array([True])
    assert A.strength_update([0.0], [m, m], 9.0, 0.5, 5)[0] == pytest.approx(1.5)
    assert A.strength_update([0.2], [m, m, m], 0.0, 0.5, 5)[0] == 0.2
    none = np.array([False])
    # bp_max=1: a rule matched only at t-2 gets nothing
    assert A.strength_update([0.0], [none, none, m], 9.0, 0.5, 1)[0] == 0.0


def test_finalize_examples():
    out = A.finalize_strength([3.0, 5.0, -2.0], [3, 0, 4])
    assert out.tolist() == [1.0, 5.0, -0.5]


def test_learning_config_validation():
    with pytest.raises(ValueError):
        A.LearningConfig(alpha_q=1.5)
    with pytest.raises(ValueError):
        A.LearningConfig(lam=1.0)
    with pytest.raises(ValueError):
        A.LearningConfig.from_dict({"gamma": 0.1})
    assert A.LearningConfig().horizon_ok


# -- GRASP -----------------------------------------------------------------

def test_grasp_candidates_examples():
    q = [4.0, 2.0, 0.0]
    assert A.grasp_threshold(4.0, 0.0, 0.5) == 2.0
    assert A.grasp_candidates(q, 0.5).tolist() == [0, 1]
    assert A.grasp_candidates([1.0, 3.0, 3.0], 0.0).tolist() == [1, 2]
    assert A.grasp_candidates(q, 1.0).tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        A.grasp_candidates([], 0.3)


def _select(q, alpha, u, atoms_ok=None):
    """Drive the compiled selector for one agent whose rules carry no atoms."""
    q = np.asarray(q, dtype=float)[None, :]
    R = q.shape[1]
    rule_atoms = np.zeros((1, R, 1), dtype=np.int64)
    natoms = np.zeros((1, R), dtype=np.int64)
    if atoms_ok is not None:
        natoms[0, ~np.asarray(atoms_ok)] = 1     # require atom 0, which is false below
    atoms = np.zeros((1, g.N_ATOMS), dtype=bool)
    aids = np.arange(R, dtype=np.int64)[None, :]
    return K.select_rules(atoms, rule_atoms, natoms, q.copy(), aids,
                          np.zeros((1, R), dtype=bool), np.zeros(1), 0.1, 0.9, alpha,
                          np.array([u]))


def test_grasp_frequencies_match_law():
    rng = np.random.default_rng(0)
    q = np.array([4.0, 2.0, 0.0, 3.0, 1.0])
    alpha = 0.5
    n = 100_000
    counts = np.zeros(5)
    for u in rng.random(n):
        counts[_select(q, alpha, u)[2][0]] += 1
    cand = A.grasp_candidates(q, alpha)
    expect = np.zeros(5)
    expect[cand] = 1 / len(cand)
    sd = np.sqrt(n * expect * (1 - expect))
    assert np.all(np.abs(counts - n * expect) <= 3 * sd + 1e-9)


def test_empty_shortlist_idles():
    sl, matched, sel, aid = _select([1.0, 2.0], 0.3, 0.5, atoms_ok=[False, False])
    assert not sl.any() and not matched.any() and sel[0] == -1 and aid[0] == -1


@pytest.mark.parametrize("seed", range(4))
def test_bandit_fixed_point(seed):
    # two always-matching arms paying rho = 1.0 and 0.5. GRASP with zero-initialised q locks
    # onto whichever arm first earns a positive q; that arm's q -> rho / (1 - beta)
    alpha_q, beta_q = 0.1, 0.9
    payout = np.array([1.0, 0.5])
    R = 2
    q = np.zeros((1, R))
    err = np.zeros((1, R))
    strength = np.zeros((1, R))
    uses = np.zeros((1, R), dtype=np.int64)
    hist = np.zeros((3, 1, R), dtype=bool)
    trace = np.zeros((1, R))
    pending = np.zeros((1, R), dtype=bool)
    pending_rho = np.zeros(1)
    atoms = np.zeros((1, g.N_ATOMS), dtype=bool)
    rng = np.random.default_rng(seed)
    pulls = np.zeros(R)
    head = 0
    for _ in range(5000):
        _, matched, sel, _ = K.select_rules(
            atoms, np.zeros((1, R, 1), dtype=np.int64), np.zeros((1, R), dtype=np.int64), q,
            np.arange(R, dtype=np.int64)[None, :], pending, pending_rho, alpha_q, beta_q, 0.3,
            rng.random(1))
        kind = np.array([W.MOVE], dtype=np.int8)
        rho = K.learn(kind, np.zeros(1), np.zeros(1, dtype=bool), payout[sel], 0.0, 0.0,
                      matched, q, err, strength, uses, hist, head, trace, 0.5, alpha_q)
        head = (head + 1) % 3
        pending[:] = matched
        pending_rho[:] = rho
        pulls[sel[0]] += 1
    arm = int(pulls.argmax())
    assert pulls[arm] >= 4900
    target = payout[arm] / (1 - beta_q)
    assert abs(q[0, arm] - target) <= 0.01 * target


# -- eligibility traces ------------------------------------------------------

def td_lambda(masks, rewards, lam):
    """Classical accumulating-trace TD(lambda) credit: e = lam*e + m; zeta += g(rho) * e."""
    e = np.zeros(masks.shape[1])
    z = np.zeros(masks.shape[1])
    for m, r in zip(masks, rewards):
        e = lam * e + m
        z = z + A.signed_log(r) * e
    return z


def _kernel_strength(masks, rewards, lam, depth):
    R = masks.shape[1]
    strength = np.zeros((1, R))
    hist = np.zeros((depth, 1, R), dtype=bool)
    trace = np.zeros((1, R))
    err = np.zeros((1, R))
    q = np.zeros((1, R))
    uses = np.zeros((1, R), dtype=np.int64)
    head = 0
    kind = np.array([W.MOVE], dtype=np.int8)
    for m, r in zip(masks, rewards):
        K.learn(kind, np.zeros(1), np.zeros(1, dtype=bool), np.array([r]), 0.0, 0.0,
                m[None, :].copy(), q, err, strength, uses, hist, head, trace, lam, 0.2)
        head = (head + 1) % depth
    return strength[0], uses[0]


def _numpy_strength(masks, rewards, lam, bp_max):
    z = np.zeros(masks.shape[1])
    for t, r in enumerate(rewards):
        history = [masks[t - d] for d in range(min(t, bp_max) + 1)]
        z = A.strength_update(z, history, r, lam, bp_max)
    return z


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.3, 0.5, 0.8]))
def test_full_horizon_equals_td_lambda(seed, lam):
    rng = np.random.default_rng(seed)
    masks = rng.random((10, 6)) < 0.4
    rewards = rng.normal(0, 5, 10)
    oracle = td_lambda(masks, rewards, lam)
    assert np.allclose(_numpy_strength(masks, rewards, lam, 10), oracle, atol=1e-12)
    assert np.allclose(_kernel_strength(masks, rewards, lam, 11)[0], oracle, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.sampled_from([0.3, 0.5, 0.8]))
def test_kernel_trace_matches_truncated_history(seed, bp_max, lam):
    rng = np.random.default_rng(seed)
    masks = rng.random((60, 5)) < 0.4
    rewards = rng.normal(0, 5, 60)
    got, uses = _kernel_strength(masks, rewards, lam, bp_max + 1)
    assert np.allclose(got, _numpy_strength(masks, rewards, lam, bp_max), atol=1e-9)
    assert uses.tolist() == masks.sum(axis=0).tolist()


def test_kernel_reward_and_error_match_numpy():
    rng = np.random.default_rng(5)
    n, R = 6, 4
    kind = rng.integers(0, 4, n).astype(np.int8)
    dp = rng.normal(0, 10, n)
    inter = rng.random(n) < 0.5
    ds = rng.normal(0, 1, n)
    matched = rng.random((n, R)) < 0.5
    matched[kind == W.IDLE] = False
    q = rng.normal(0, 1, (n, R))
    err = rng.random((n, R))
    err0 = err.copy()
    rho = K.learn(kind, dp, inter, ds, 0.05, 0.1, matched, q, err, np.zeros((n, R)),
                  np.zeros((n, R), dtype=np.int64), np.zeros((2, n, R), dtype=bool), 0,
                  np.zeros((n, R)), 0.5, 0.2)
    cost = np.where(kind == W.MOVE, 0.05, 0.1)
    expect = np.where(kind == W.IDLE, 0.0, A.compute_reward(dp, inter, ds, cost))
    assert np.allclose(rho, expect, atol=1e-12)
    expect_err = np.where(matched, A.error_update(err0, rho[:, None], q, 0.2), err0)
    assert np.allclose(err, expect_err, atol=1e-12)


# -- perception --------------------------------------------------------------

def quiet_world(pts, n=None, jammers=None):
    n = len(pts) if n is None else n
    env = W.EnvConfig(swarm_size=n, radio=RadioConfig(shadowing_sigma=0.0))
    layout = W.Layout(np.zeros((0, 4)), np.zeros((0, 2)) if jammers is None else np.asarray(jammers))
    world = W.World(env, layout, np.random.default_rng(0))
    world.pos[:n] = pts
    world.refresh_geometry()
    return world


def test_isolated_agent_sees_nothing():
    world = quiet_world([(300.0, 240.0)])
    obs = A.perceive(world)
    assert not obs.neighbors.any()
    assert np.isnan(obs.values[0, :3]).all()
    assert (obs.selectors == -1).all()


def test_neighbor_at_ten_metres():
    world = quiet_world([(300.0, 200.0), (310.0, 200.0)])
    obs = A.perceive(world)
    assert obs.neighbors[0, 1] and obs.neighbors[1, 0]
    assert obs.values[0, A.VAL_COLUMNS.index("d_c")] == pytest.approx(10.0)
    assert obs.selectors[0, 2] == 1


def test_jammed_agent_has_empty_neighborhood():
    world = quiet_world([(300.0, 200.0), (310.0, 200.0)], jammers=[(300.0, 201.0)])
    world.jammed[0] = 1
    obs = A.perceive(world)
    assert not obs.neighbors[0].any()


def _atom(atom):
    return g.ATOMS.index(atom)


def test_predicates_on_atoms():
    world = quiet_world([(300.0, 240.0)])
    obs = A.perceive(world)
    assert not obs.atoms[0, _atom(g.PacketHeld(True))]
    assert obs.atoms[0, _atom(g.PacketHeld(False))]
    # d_c undefined -> every comparison that reads it is false
    for k, a in enumerate(g.ATOMS):
        if isinstance(a, g.DistanceCompare) and "d_c" in (a.lhs, a.rhs):
            assert not obs.atoms[0, k]


def test_all_false_rules_idle():
    world = quiet_world([(300.0, 240.0)])
    rules = [g.rule_from_genomes([2, 0], [0, 0, 0]) for _ in range(100)]    # "has packet" rules
    assert all(r.condition == g.PacketHeld(True) for r in rules)
    swarm = A.RuleSwarm([rules])
    it = swarm.decide(world)
    assert it.kind[0] == W.IDLE and not swarm.last_shortlist.any()


def test_send_unresolved_target_stays_put():
    world = quiet_world([(300.0, 240.0)])
    send_si = next(a for a in g.ACTIONS if isinstance(a, g.Send) and a.target == "si")
    obs = A.perceive(world)
    tpos, tok, dest = A.resolve_targets(world, obs)
    assert dest[0, A.SI] == -1
    aid = np.array([g.ACTIONS.index(send_si)])
    kind, _, _, _, d, _, _ = K.build_intents(
        1, aid, world.pos, obs.selectors, obs.neighbors, obs.v_close, obs.v_close_ok,
        obs.obstacle, obs.obstacle_ok, A.ACT_KIND, A.ACT_DIR, A.ACT_TARGET, A.ACT_CHANNEL,
        A.ACT_POWER)
    assert kind[0] == W.SEND and d[0] == -1


# -- collect success against the analytic link budget -------------------------

def _collect_rate(power, d, trials, seed):
    env = W.EnvConfig(swarm_size=1)
    world = W.World(env, None, np.random.default_rng(seed))
    world.pos[0] = (-d, 0.0)
    world.refresh_geometry()
    it = W.Intents.idle(1)
    it.kind[0], it.dest[0], it.power[0] = W.COLLECT, world.source, power
    ok = 0
    for _ in range(trials):
        world.held[0] = -1
        world.top = world.p
        world.communicate(it)
        ok += world.held[0] >= 0
    return ok / trials


@pytest.mark.parametrize("power", [50, 100])
def test_collect_success_rate(power):
    r = W.EnvConfig().radio
    d = 120.0
    pl = r.pl0 + 10 * r.exponent * math.log10(d)
    margin_req = r.tx_power + 10 * math.log10(power / 100) - pl - r.noise_floor - r.snir_threshold
    margin_resp = r.tx_power - pl - r.noise_floor - r.snir_threshold
    # request and response see independent shadowing draws
    p = norm.cdf(margin_req / r.shadowing_sigma) * norm.cdf(margin_resp / r.shadowing_sigma)
    trials = 20_000
    rate = _collect_rate(power, d, trials, seed=power)
    assert abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / trials)


# -- swarm controller ----------------------------------------------------------

def test_rule_swarm_finish_flushes_and_averages():
    rng = np.random.default_rng(3)
    env = W.EnvConfig(swarm_size=4, time_limit=200)
    rule_sets = [g.random_rule_set(rng, 30) for _ in range(4)]
    swarm = A.RuleSwarm(rule_sets)
    world = W.World(env, None, np.random.default_rng(4))
    W.run_operation(world, swarm)
    raw = swarm.strength.copy()
    swarm.finish()
    assert not swarm._pending.any()
    used = swarm.uses > 0
    assert np.allclose(swarm.strength[used], raw[used] / swarm.uses[used])
    assert swarm.uses.sum() > 0


def test_rule_swarm_rejects_ragged_rule_sets():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        A.RuleSwarm([g.random_rule_set(rng, 3), g.random_rule_set(rng, 4)])
