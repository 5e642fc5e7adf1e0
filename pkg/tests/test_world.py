import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmevo import world as W
from swarmevo.radio import RadioConfig


def quiet_env(n=2, **kw):
    kw.setdefault("radio", RadioConfig(shadowing_sigma=0.0))
    return W.EnvConfig(swarm_size=n, **kw)


def place(world, pts):
    world.pos[: len(pts)] = pts
    world.refresh_geometry()


class RandomController:
    """Uniformly random intents, including invalid ones, to stress custody bookkeeping."""

    def __init__(self, rng):
        self.rng = rng

    def decide(self, world):
        n, rng = world.n_agents, self.rng
        it = W.Intents.idle(n)
        it.kind[:] = rng.integers(0, 4, n)
        it.direction[:] = rng.integers(0, 3, n)
        it.target_pos[:] = world.pos[rng.integers(0, len(world.pos), n)]
        it.target_ok[:] = rng.random(n) < 0.9
        it.dest[:] = rng.integers(-1, n + 2, n)
        it.dest[it.kind == W.COLLECT] = world.source
        it.channel[:] = rng.choice([1, 6, 11], n)
        it.power[:] = rng.choice([50, 100], n)
        return it

    def learn(self, world, intents, outcome):
        pass


@pytest.mark.parametrize("env_type", W.ENV_TYPES)
def test_packet_conservation_random_steps(env_type):
    env = W.EnvConfig(env_type=env_type, swarm_size=8, time_limit=10_000, distance=150.0,
                      deploy_radius=60.0, margin=400.0, half_height=500.0)
    rng = np.random.default_rng(3)
    layout = W.generate_layout(env, rng)
    world = W.World(env, layout, rng)
    ctl = RandomController(np.random.default_rng(4))
    moved = 0
    while not world.done:
        world.step(ctl)
        assert world.conservation_ok()
        held = world.held[world.held >= 0]
        assert len(set(held.tolist())) == len(held)
        moved += world.top < world.p
    assert world.t == env.T or world.delivered == world.p
    assert moved > 0, "packets never left the source"


def test_successful_send_moves_custody_in_one_step():
    world = W.World(quiet_env(2), None, np.random.default_rng(0))
    place(world, [(5.0, 0.0), (15.0, 0.0)])
    it = W.Intents.idle(2)
    it.kind[0], it.dest[0] = W.COLLECT, world.source
    world.communicate(it)
    assert world.held.tolist() == [0, -1] and world.top == world.p - 1
    it = W.Intents.idle(2)
    it.kind[0], it.dest[0] = W.SEND, 1
    transfers, _, success, received = world.communicate(it)
    assert world.held.tolist() == [-1, 0]
    assert transfers == [(0, 1, 0)] and success[0] and received[1]
    assert world.conservation_ok()


def test_send_without_packet_is_noop():
    world = W.World(quiet_env(2), None, np.random.default_rng(0))
    place(world, [(5.0, 0.0), (15.0, 0.0)])
    it = W.Intents.idle(2)
    it.kind[0], it.dest[0] = W.SEND, world.sink
    transfers, transmitted, _, _ = world.communicate(it)
    assert transfers == [] and not transmitted.any()


def test_delivery_to_sink_counts():
    world = W.World(quiet_env(1), None, np.random.default_rng(0))
    d = world.env.source_sink_distance
    place(world, [(d - 10.0, 0.0)])
    world.held[0] = world.stack[world.top - 1]
    world.top -= 1
    it = W.Intents.idle(1)
    it.kind[0], it.dest[0] = W.SEND, world.sink
    world.communicate(it)
    assert world.delivered == 1 and world.held[0] == -1 and world.conservation_ok()


class Idle:
    def decide(self, world):
        return W.Intents.idle(world.n_agents)

    def learn(self, world, intents, outcome):
        self.outcome = outcome


def test_idle_step_only_advances_time():
    world = W.World(W.EnvConfig(swarm_size=5), None, np.random.default_rng(1))
    before = (world.pos.copy(), world.held.copy(), world.top, world.delivered)
    ctl = Idle()
    world.step(ctl)
    assert world.t == 1
    assert np.array_equal(world.pos, before[0]) and np.array_equal(world.held, before[1])
    assert (world.top, world.delivered) == before[2:]
    assert ctl.outcome.transfers == [] and not ctl.outcome.delta_packet.any()


def _move(world, i, direction, target):
    it = W.Intents.idle(world.n_agents)
    it.kind[i], it.direction[i] = W.MOVE, direction
    it.target_pos[i], it.target_ok[i] = target, True
    world.move(it)


def test_move_toward_sink_unit_step():
    world = W.World(quiet_env(1, distance=100.0), None, np.random.default_rng(0))
    place(world, [(0.0, 0.0)])
    _move(world, 0, W.TOWARD, world.pos[world.sink])
    assert world.pos[0] == pytest.approx([1.0, 0.0])


def test_move_away_and_orbit():
    world = W.World(quiet_env(1), None, np.random.default_rng(0))
    place(world, [(10.0, 0.0)])
    _move(world, 0, W.AWAY, (0.0, 0.0))
    assert world.pos[0] == pytest.approx([11.0, 0.0])
    place(world, [(10.0, 0.0)])
    _move(world, 0, W.ORBIT, (0.0, 0.0))
    assert np.hypot(*world.pos[0]) == pytest.approx(10.0)
    assert world.pos[0, 1] > 0     # counter-clockwise from the +x axis


def test_unresolved_target_does_not_move():
    world = W.World(quiet_env(1), None, np.random.default_rng(0))
    place(world, [(3.0, 4.0)])
    it = W.Intents.idle(1)
    it.kind[0] = W.MOVE
    world.move(it)
    assert world.pos[0] == pytest.approx([3.0, 4.0])


def test_wall_stops_motion_along_normal():
    env = quiet_env(1)
    walls = np.array([[10.0, -20.0, 10.0, 20.0]])
    world = W.World(env, W.Layout(walls, np.zeros((0, 2))), np.random.default_rng(0))
    x = 10.0 - world.clearance
    place(world, [(x, 0.0)])
    _move(world, 0, W.TOWARD, (50.0, 0.0))
    assert world.pos[0] == pytest.approx([x, 0.0])
    # oblique approach slides along the wall instead
    _move(world, 0, W.TOWARD, (50.0, 40.0))
    assert world.pos[0, 0] == pytest.approx(x) and world.pos[0, 1] > 0


def test_building_wall_inclusion_rate():
    rng = np.random.default_rng(7)
    counts = [len(W.building_walls(rng, 0, 0, 20, 10)) for _ in range(10_000)]
    assert np.mean(counts) == pytest.approx(3.0, abs=0.1)
    assert set(counts) <= set(range(7))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_building_count_range(seed):
    b = W.generate_urban(np.random.default_rng(seed), 600.0)
    assert 1 <= len(b) <= 60


def test_layout_deterministic():
    env = W.EnvConfig(env_type="urban_jammed")
    a = W.generate_layout(env, np.random.default_rng(9))
    b = W.generate_layout(env, np.random.default_rng(9))
    assert np.array_equal(a.walls, b.walls) and np.array_equal(a.jammers, b.jammers)


def test_jammer_leaves_network_nodes_unaffected():
    env = W.EnvConfig(env_type="jammed")
    r = env.radio
    for seed in range(20):
        j = W.place_jammer(np.random.default_rng(seed), env)
        for node in ((0.0, 0.0), (env.source_sink_distance, 0.0)):
            d = np.hypot(*(j - node))
            assert r.tx_power - (r.pl0 + 10 * r.exponent * np.log10(d)) <= r.noise_floor + 1e-9


def test_event_logs_bit_identical(tmp_path):
    env = W.EnvConfig(env_type="urban_jammed", time_limit=300)
    logs = []
    for k in range(2):
        rng = np.random.default_rng(11)
        world = W.World(env, W.generate_layout(env, rng), rng, log_events=True)
        W.run_operation(world, RandomController(np.random.default_rng(12)))
        path = tmp_path / f"ev{k}.jsonl"
        world.write_events(path)
        logs.append(path.read_bytes())
    assert logs[0] == logs[1]
    first = json.loads(logs[0].splitlines()[0])
    assert set(first) == {"t", "pos", "held", "transfers", "jam", "delivered", "at_source"}


def test_env_config_keys():
    env = W.EnvConfig.from_dict({"type": "urban", "range": "long", "swarmSize": 4, "seed": 3})
    assert (env.env_type, env.env_range, env.swarm_size, env.T) == ("urban", "long", 4, 40000)
    with pytest.raises(ValueError):
        W.EnvConfig.from_dict({"type": "sea"})
    with pytest.raises(ValueError):
        W.EnvConfig.from_dict({"colour": 1})


def test_step_after_done_raises():
    world = W.World(W.EnvConfig(swarm_size=1, time_limit=1), None, np.random.default_rng(0))
    world.step(Idle())
    with pytest.raises(RuntimeError):
        world.step(Idle())
