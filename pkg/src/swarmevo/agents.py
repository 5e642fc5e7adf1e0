"""Agent perception, rule shortlisting, GRASP selection and online learning.

The update rules (``q_update``, ``error_update``, ``strength_delta``,
``compute_reward``...) are plain numpy functions. The swarm controller runs
loop versions of the same arithmetic from ``_kernels``; the test-suite checks
that both agree step by step.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import grammar as g
from . import _kernels as K
from .world import COLLECT, IDLE, MOVE, SEND, Intents, StepOutcome, World


@dataclass
class LearningConfig:
    alpha_grasp: float = 0.3
    alpha_q: float = 0.2
    beta_q: float = 0.9
    lam: float = 0.5
    bp_max: int = 5
    cost_move: float = 0.05
    cost_comm: float = 0.1

    def __post_init__(self):
        for name in ("alpha_grasp", "alpha_q", "beta_q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lam must be in (0, 1)")
        if self.bp_max < 1:
            raise ValueError("bp_max must be >= 1")
        if self.cost_move < 0 or self.cost_comm < 0:
            raise ValueError("action costs must be >= 0")

    @property
    def horizon_ok(self) -> bool:
        """Truncated back-propagation is adequate when lam**bp_max is ~0."""
        return self.lam ** self.bp_max <= 0.05

    @classmethod
    def from_dict(cls, d: dict | None) -> "LearningConfig":
        d = dict(d or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown learning keys: {sorted(unknown)}")
        return cls(**d)


# --------------------------------------------------------------------------
# Update rules

def signed_log(x):
    """log10(|x| + 1) * sgn(x)."""
    return np.log10(np.abs(x) + 1.0) * np.sign(x)


def compute_reward(delta_packet, interacted, delta_source, cost):
    """Geographic-routing reward.

    ``delta_packet`` is the summed progress of held/transferred/received
    packets toward the sink; when the agent touched no packet it is instead
    paid its own (uncompressed) progress toward the source.
    """
    rho_s = np.where(interacted, 0.0, delta_source)
    return signed_log(delta_packet) + rho_s - cost


def q_update(q, rho, max_next, alpha_q, beta_q):
    return q * (1.0 - alpha_q) + alpha_q * (rho + beta_q * max_next)


def error_update(error, rho, q, alpha_q):
    return error * (1.0 - alpha_q) + alpha_q * np.abs(rho - q)


def strength_delta(rho, lam, depth):
    """Strength increment for a rule matched ``depth`` steps before the reward."""
    return lam ** depth * signed_log(rho)


def strength_update(strength, history, rho, lam, bp_max):
    """Apply one reward to every rule matched in the last ``bp_max + 1`` steps.

    ``history[0]`` is the current matched set, ``history[k]`` the set ``k``
    steps back (boolean masks aligned with ``strength``).
    """
    strength = np.array(strength, dtype=float, copy=True)
    for depth, mask in enumerate(history[: bp_max + 1]):
        strength = strength + np.where(mask, strength_delta(rho, lam, depth), 0.0)
    return strength


def finalize_strength(strength, uses):
    """Average accumulated strength over usage; unused rules are left as they are."""
    uses = np.asarray(uses)
    return np.where(uses > 0, np.asarray(strength, dtype=float) / np.maximum(uses, 1), strength)


def grasp_threshold(q_max, q_min, alpha):
    # written as a convex combination so alpha=1 hits q_min exactly
    return (1.0 - alpha) * q_max + alpha * q_min


def grasp_candidates(q, alpha):
    """Indices of the restricted candidate list for a non-empty shortlist's q values."""
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        raise ValueError("shortlist is empty")
    thr = grasp_threshold(q.max(), q.min(), alpha)
    return np.flatnonzero(q >= thr)


def grasp_select(q, alpha, rng: np.random.Generator) -> int:
    """Pick uniformly among shortlist entries with q >= q_grasp; returns a position in ``q``."""
    cand = grasp_candidates(q, alpha)
    return int(cand[rng.integers(len(cand))])


# --------------------------------------------------------------------------
# Perception

TARGET_CODES = {t: i for i, t in enumerate(g.MOVE_TARGETS)}
SO, SI, C, SOURCE, SINK, V_CLOSE, OBST = range(7)
VAL_COLUMNS = ("d_so", "d_si", "d_c", "d_sink", "d_source", "d_th", "net", "xi")
_COL = {c: i for i, c in enumerate(VAL_COLUMNS)}

_dist_atoms = [a for a in g.ATOMS if isinstance(a, g.DistanceCompare)]
_DIST_START = g.ATOMS.index(_dist_atoms[0])
_RHS_COL = np.array([_COL[a.rhs] for a in _dist_atoms])
_LHS_COL = np.array([_COL[a.lhs] for a in _dist_atoms])
_OP = np.array([g.OPERATORS.index(a.op) for a in _dist_atoms])
EQ_TOLERANCE = 1.0


@dataclass
class Observation:
    neighbors: np.ndarray       # (n, n+2) bool
    values: np.ndarray          # (n, len(VAL_COLUMNS)) nan where undefined
    selectors: np.ndarray       # (n, 3) node index of so, si, c or -1
    has_packet: np.ndarray
    net_node: np.ndarray
    noise: np.ndarray           # (n, 3) dB above noise floor per channel
    ni: np.ndarray              # noise on the agent's current channel
    v_close: np.ndarray         # (n, 2)
    v_close_ok: np.ndarray
    obstacle: np.ndarray        # (n, 2)
    obstacle_ok: np.ndarray
    atoms: np.ndarray           # (n, N_ATOMS) bool


def perceive(world: World) -> Observation:
    """Beacon neighbourhood (channel 1), distance features and condition atoms for every agent."""
    n = world.n_agents
    env = world.env
    radio = world.radio
    xs = world.shadowing()
    nb, values, sel, vc, vc_ok, obst, obst_ok, net_node, atoms = K.perceive(
        n, world.t, world.pos, world.held, world.pl, world.dist, xs, world.jammed,
        radio.tx_power, radio.noise_mw, radio.snir_threshold, world.known_pos, world.known_t,
        env.k_period, world.walls, env.lidar_range, env.d_th, world.net_range,
        world.channel, world.noise_db, env.p_rs, _RHS_COL, _LHS_COL, _OP, EQ_TOLERANCE,
        g.N_ATOMS, _DIST_START)
    return Observation(nb, values, sel, world.held >= 0, net_node, world.noise_db.copy(),
                       values[:, 7], vc, vc_ok, obst, obst_ok, atoms)


def resolve_targets(world: World, obs: Observation):
    """Move-target positions (n, 7, 2) with validity, and send destinations (n, 5)."""
    n = world.n_agents
    pos = world.pos
    tpos = np.zeros((n, 7, 2))
    tok = np.zeros((n, 7), dtype=bool)
    for col in range(3):
        s = obs.selectors[:, col]
        ok = s >= 0
        tpos[ok, col] = pos[s[ok]]
        tok[:, col] = ok
    tpos[:, SOURCE] = pos[world.source]
    tpos[:, SINK] = pos[world.sink]
    tok[:, SOURCE] = tok[:, SINK] = True
    tpos[:, V_CLOSE] = obs.v_close
    tok[:, V_CLOSE] = obs.v_close_ok
    tpos[:, OBST] = obs.obstacle
    tok[:, OBST] = obs.obstacle_ok
    dest = np.full((n, 5), -1)
    dest[:, 0:3] = obs.selectors
    dest[:, SOURCE] = np.where(obs.neighbors[:, world.source], world.source, -1)
    dest[:, SINK] = np.where(obs.neighbors[:, world.sink], world.sink, -1)
    return tpos, tok, dest


# --------------------------------------------------------------------------
# Lookup tables over the action space

def _action_tables():
    kind = np.zeros(g.N_ACTIONS, dtype=np.int8)
    direction = np.zeros(g.N_ACTIONS, dtype=np.int8)
    target = np.zeros(g.N_ACTIONS, dtype=int)
    channel = np.ones(g.N_ACTIONS, dtype=int)
    power = np.full(g.N_ACTIONS, 100, dtype=int)
    for i, a in enumerate(g.ACTIONS):
        if isinstance(a, g.Move):
            kind[i] = MOVE
            direction[i] = g.DIRECTIONS.index(a.direction)
            target[i] = TARGET_CODES[a.target]
        elif isinstance(a, g.Collect):
            kind[i] = COLLECT
            channel[i], power[i] = a.channel, a.power
        else:
            kind[i] = SEND
            target[i] = TARGET_CODES[a.target]
            channel[i], power[i] = a.channel, a.power
    return kind, direction, target, channel, power


ACT_KIND, ACT_DIR, ACT_TARGET, ACT_CHANNEL, ACT_POWER = _action_tables()


def shortlist(requirements: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    """Rules whose every required atom holds.

    ``requirements`` is (..., rules, atoms) and ``atoms`` (..., atoms).
    """
    unmet = requirements.astype(np.float32) @ (~atoms)[..., :, None].astype(np.float32)
    return unmet[..., 0] == 0


def compile_rule_set(rules) -> tuple[np.ndarray, np.ndarray]:
    req = np.zeros((len(rules), g.N_ATOMS), dtype=bool)
    for i, r in enumerate(rules):
        req[i, list(r.atoms)] = True
    return req, np.array([r.action_id for r in rules], dtype=int)


class RuleSwarm:
    """Controller driving every agent with its own rule-set.

    Learning statistics live in (agents, rules) arrays for the duration of
    one operation and start from zero.
    """

    def __init__(self, rule_sets, learning: LearningConfig | None = None):
        self.cfg = learning or LearningConfig()
        self.n = len(rule_sets)
        sizes = {len(rs) for rs in rule_sets}
        if len(sizes) > 1:
            raise ValueError("all rule-sets must have the same size")
        self.size = sizes.pop() if sizes else 0
        shape = (self.n, self.size)
        width = max([len(r.atoms) for rs in rule_sets for r in rs] + [1])
        self.rule_atoms = np.zeros(shape + (width,), dtype=np.int64)
        self.rule_natoms = np.zeros(shape, dtype=np.int64)
        self.action_ids = np.zeros(shape, dtype=np.int64)
        for i, rs in enumerate(rule_sets):
            for j, r in enumerate(rs):
                idx = sorted(r.atoms)
                self.rule_atoms[i, j, :len(idx)] = idx
                self.rule_natoms[i, j] = len(idx)
                self.action_ids[i, j] = r.action_id
        self.q = np.zeros(shape)
        self.strength = np.zeros(shape)
        self.error = np.zeros(shape)
        self.uses = np.zeros(shape, dtype=np.int64)
        depth = self.cfg.bp_max + 1
        self._hist = np.zeros((depth,) + shape, dtype=bool)
        self._head = 0
        self._trace = np.zeros(shape)
        self._pending = np.zeros(shape, dtype=bool)
        self._pending_rho = np.zeros(self.n)
        self.last_shortlist = np.zeros(shape, dtype=bool)
        self.last_matched = np.zeros(shape, dtype=bool)
        self.selected = np.full(self.n, -1)
        self.last_reward = np.zeros(self.n)

    def decide(self, world: World) -> Intents:
        cfg = self.cfg
        obs = perceive(world)
        sl, matched, sel, aid = K.select_rules(
            obs.atoms, self.rule_atoms, self.rule_natoms, self.q, self.action_ids,
            self._pending, self._pending_rho, cfg.alpha_q, cfg.beta_q, cfg.alpha_grasp,
            world.uniform())
        self.last_shortlist, self.last_matched, self.selected = sl, matched, sel
        self.obs = obs
        return Intents(*K.build_intents(
            self.n, aid, world.pos, obs.selectors, obs.neighbors, obs.v_close, obs.v_close_ok,
            obs.obstacle, obs.obstacle_ok, ACT_KIND, ACT_DIR, ACT_TARGET, ACT_CHANNEL, ACT_POWER))

    def learn(self, world: World, intents: Intents, outcome: StepOutcome):
        cfg = self.cfg
        rho = K.learn(intents.kind, outcome.delta_packet, outcome.interacted, outcome.delta_source,
                      cfg.cost_move, cfg.cost_comm, self.last_matched, self.q, self.error,
                      self.strength, self.uses, self._hist, self._head, self._trace,
                      cfg.lam, cfg.alpha_q)
        self._head = (self._head + 1) % len(self._hist)
        self._pending[:] = self.last_matched
        self._pending_rho = rho
        self.last_reward = rho

    def finish(self):
        """Flush the last Q update (no successor step) and average strength by usage."""
        if self._pending.any():
            updated = q_update(self.q, self._pending_rho[:, None], 0.0,
                               self.cfg.alpha_q, self.cfg.beta_q)
            self.q = np.where(self._pending, updated, self.q)
            self._pending[:] = False
        self.strength = finalize_strength(self.strength, self.uses)
