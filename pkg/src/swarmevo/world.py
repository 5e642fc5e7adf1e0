"""Discrete-time 2D world for the source -> sink packet relay task.

Node indexing inside a :class:`World`: agents occupy ``0..n_agents-1``,
then the source, the sink, and finally any jammers. The per-step phase
order is fixed:

1. perception and 2. rule selection (delegated to the controller),
3. movement with wall collision,
4. jammer channel scan,
5. SNIR-gated communication and packet custody transfer,
6. reward/learning (delegated to the controller),
7. ``t += 1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, asdict
from typing import Protocol

import numpy as np

from . import _kernels as K
from .radio import CHANNELS, RadioConfig, nearest_points_on_walls

ENV_TYPES = ("open", "jammed", "urban", "urban_jammed")
RANGES = {"short": (600.0, 20000), "long": (1000.0, 40000)}

IDLE, MOVE, COLLECT, SEND = 0, 1, 2, 3
TOWARD, AWAY, ORBIT = 0, 1, 2

WALL_THICKNESS = 1.0


@dataclass
class EnvConfig:
    env_type: str = "open"
    env_range: str = "short"
    swarm_size: int = 10
    packets: int = 500
    time_limit: int | None = None       # None -> range default
    distance: float | None = None       # None -> range default
    speed: float = 1.0
    body_radius: float = 0.5
    deploy_radius: float = 20.0
    lidar_range: float = 15.0
    d_th: float = 50.0
    p_rs: float = 6.0                   # dB above the noise floor
    k_period: int = 25
    margin: float = 100.0
    half_height: float = 250.0
    radio: RadioConfig = field(default_factory=RadioConfig)

    def __post_init__(self):
        if self.env_type not in ENV_TYPES:
            raise ValueError(f"env_type must be one of {ENV_TYPES}")
        if self.env_range not in RANGES:
            raise ValueError(f"env_range must be one of {tuple(RANGES)}")
        if self.swarm_size < 0:
            raise ValueError("swarm_size must be >= 0")
        if self.packets <= 0:
            raise ValueError("packets must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if isinstance(self.radio, dict):
            self.radio = RadioConfig.from_dict(self.radio)

    @property
    def T(self) -> int:
        return self.time_limit if self.time_limit is not None else RANGES[self.env_range][1]

    @property
    def source_sink_distance(self) -> float:
        return self.distance if self.distance is not None else RANGES[self.env_range][0]

    @property
    def has_walls(self) -> bool:
        return self.env_type in ("urban", "urban_jammed")

    @property
    def has_jammer(self) -> bool:
        return self.env_type in ("jammed", "urban_jammed")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        d = self.source_sink_distance
        return -self.margin, d + self.margin, -self.half_height, self.half_height

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        if "type" in d:
            d["env_type"] = d.pop("type")
        if "range" in d:
            d["env_range"] = d.pop("range")
        if "swarmSize" in d:
            d["swarm_size"] = d.pop("swarmSize")
        d.pop("seed", None)
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown environment keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# Layout

@dataclass
class Building:
    center: tuple[float, float]
    length: float
    width: float
    walls: np.ndarray   # (k, 4), k in 0..6


def building_walls(rng: np.random.Generator, cx: float, cy: float, length: float,
                   width: float, p_wall: float = 0.5) -> np.ndarray:
    """Six candidate perimeter walls (split long edges, whole short edges), each kept with p_wall."""
    x0, x1 = cx - length / 2, cx + length / 2
    y0, y1 = cy - width / 2, cy + width / 2
    candidates = np.array([
        [x0, y0, cx, y0], [cx, y0, x1, y0],     # bottom, two halves
        [x0, y1, cx, y1], [cx, y1, x1, y1],     # top, two halves
        [x0, y0, x0, y1],                       # left
        [x1, y0, x1, y1],                       # right
    ])
    keep = rng.random(6) < p_wall
    return candidates[keep]


def generate_urban(rng: np.random.Generator, d_source_sink: float,
                   bounds: tuple[float, float, float, float] | None = None,
                   keep_clear: list | None = None, clearance: float = 25.0) -> list[Building]:
    """Random buildings: count ~ U{1..d/10}, length/width ~ U(10, 30) m."""
    if d_source_sink <= 0:
        raise ValueError("d_source_sink must be positive")
    if bounds is None:
        bounds = (-100.0, d_source_sink + 100.0, -250.0, 250.0)
    if keep_clear is None:
        keep_clear = [(0.0, 0.0), (d_source_sink, 0.0)]
    xmin, xmax, ymin, ymax = bounds
    count = int(rng.integers(1, max(1, int(d_source_sink // 10)) + 1))
    out = []
    for _ in range(count):
        length, width = rng.uniform(10.0, 30.0, size=2)
        for _attempt in range(100):
            cx = rng.uniform(xmin + length / 2, xmax - length / 2)
            cy = rng.uniform(ymin + width / 2, ymax - width / 2)
            blocked = any(abs(px - cx) < length / 2 + clearance and abs(py - cy) < width / 2 + clearance
                          for px, py in keep_clear)
            if not blocked:
                break
        else:
            continue
        out.append(Building((cx, cy), length, width, building_walls(rng, cx, cy, length, width)))
    return out


def walls_array(buildings: list[Building]) -> np.ndarray:
    if not buildings:
        return np.zeros((0, 4))
    return np.concatenate([b.walls for b in buildings]).reshape(-1, 4)


def place_jammer(rng: np.random.Generator, env: EnvConfig, max_tries: int = 10000) -> np.ndarray:
    """Uniform position whose deterministic jam power at source and sink stays below the noise floor."""
    radio = env.radio
    xmin, xmax, ymin, ymax = env.bounds
    d = env.source_sink_distance
    # distance at which jam power falls to the noise floor
    safe = radio.d0 * 10 ** ((radio.tx_power - radio.noise_floor - radio.pl0) / (10 * radio.exponent))
    for _ in range(max_tries):
        p = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        if np.hypot(*p) >= safe and np.hypot(p[0] - d, p[1]) >= safe:
            return p
    raise RuntimeError("no jammer position leaves both network nodes unaffected; enlarge the area")


@dataclass
class Layout:
    """Per-instance static environment: walls and jammer positions."""
    walls: np.ndarray
    jammers: np.ndarray          # (J, 2)
    buildings: list[Building] = field(default_factory=list)


def generate_layout(env: EnvConfig, rng: np.random.Generator) -> Layout:
    buildings = []
    if env.has_walls:
        buildings = generate_urban(rng, env.source_sink_distance, env.bounds)
    jammers = np.zeros((0, 2))
    if env.has_jammer:
        jammers = place_jammer(rng, env)[None, :]
    return Layout(walls_array(buildings), jammers, buildings)


# --------------------------------------------------------------------------
# Controller protocol and per-step records

@dataclass
class Intents:
    """What each agent tries to do this step (arrays of length n_agents)."""
    kind: np.ndarray            # IDLE / MOVE / COLLECT / SEND
    direction: np.ndarray       # TOWARD / AWAY / ORBIT (moves)
    target_pos: np.ndarray      # (n, 2) move target
    target_ok: np.ndarray       # move target resolved
    dest: np.ndarray            # destination node for SEND, source index for COLLECT, -1 unresolved
    channel: np.ndarray
    power: np.ndarray           # percent

    @classmethod
    def idle(cls, n: int) -> "Intents":
        return cls(np.zeros(n, dtype=np.int8), np.zeros(n, dtype=np.int8), np.zeros((n, 2)),
                   np.zeros(n, dtype=bool), np.full(n, -1, dtype=np.int64),
                   np.ones(n, dtype=np.int64), np.full(n, 100, dtype=np.int64))


@dataclass
class StepOutcome:
    delta_packet: np.ndarray    # summed packet progress toward the sink per agent
    interacted: np.ndarray      # held, transferred or received a packet
    delta_source: np.ndarray    # progress toward the source per agent
    transmitted: np.ndarray
    success: np.ndarray
    transfers: list             # (from node, to node, packet id)


class Controller(Protocol):
    def decide(self, world: "World") -> Intents: ...

    def learn(self, world: "World", intents: Intents, outcome: StepOutcome) -> None: ...


# --------------------------------------------------------------------------

class World:
    def __init__(self, env: EnvConfig, layout: Layout | None, rng: np.random.Generator,
                 log_events: bool = False, draw_chunk: int = 256):
        self.env = env
        self.radio = env.radio
        self.rng = rng
        layout = layout if layout is not None else Layout(np.zeros((0, 4)), np.zeros((0, 2)))
        self.walls = np.ascontiguousarray(np.asarray(layout.walls, dtype=float).reshape(-1, 4))
        n = env.swarm_size
        self.n_agents = n
        self.source = n
        self.sink = n + 1
        self.n_jammers = len(layout.jammers)
        d = env.source_sink_distance
        self.pos = np.zeros((n + 2 + self.n_jammers, 2))
        self.pos[self.sink] = (d, 0.0)
        if self.n_jammers:
            self.pos[n + 2:] = layout.jammers
        self.pos[:n] = self._deploy(n)

        self.p = env.packets
        self.T = env.T
        self.t = 0
        self.held = np.full(n, -1, dtype=np.int64)
        # packets waiting at the source, a stack whose top is stack[top - 1]; packet 0 leaves first
        self.stack = np.arange(self.p - 1, -1, -1, dtype=np.int64)
        self.top = self.p
        self.delivered = 0
        self.touched = np.zeros((self.p, n), dtype=bool)
        self.contributions = np.zeros(n, dtype=np.int64)
        self.channel = np.ones(n, dtype=np.int64)
        self.noise_db = np.zeros((n, len(CHANNELS)))     # measured last step, dB above floor
        self.jammed = np.zeros(self.n_jammers, dtype=np.int64)
        self.known_pos = np.zeros((n, n, 2))
        self.known_t = np.full((n, n), -1, dtype=np.int64)
        self.events: list | None = [] if log_events else None
        self.net_range = self.radio.nominal_range()
        self._chunk = draw_chunk
        self._xs_buf = np.zeros((0,))
        self._xs_i = 0
        self._u_buf = np.zeros((0,))
        self._u_i = 0
        n_all = len(self.pos)
        self.pl = np.zeros((n_all, n_all))
        self.dist = np.zeros((n_all, n_all))
        self.refresh_geometry()

    # -- geometry ---------------------------------------------------------
    def _deploy(self, n):
        out = np.zeros((n, 2))
        for i in range(n):
            for _ in range(1000):
                r = self.env.deploy_radius * np.sqrt(self.rng.random())
                a = self.rng.uniform(0, 2 * np.pi)
                p = np.array([r * np.cos(a), r * np.sin(a)])
                if not self._blocked(p[None, :])[0]:
                    break
            out[i] = p
        return out

    @property
    def clearance(self) -> float:
        return WALL_THICKNESS / 2 + self.env.body_radius

    def _blocked(self, pts: np.ndarray) -> np.ndarray:
        if len(self.walls) == 0:
            return np.zeros(len(pts), dtype=bool)
        _, d = nearest_points_on_walls(pts, self.walls)
        return (d < self.clearance).any(axis=1)

    def refresh_geometry(self):
        r = self.radio
        K.geometry(self.pos, self.walls, r.pl0, r.d0, r.exponent, r.wall_loss, self.pl, self.dist)

    # -- randomness, drawn from ``rng`` in chunks so kernels stay rng-free --
    def shadowing(self) -> np.ndarray:
        """Fresh (N, N) shadowing sample in dB; one per radio evaluation."""
        if self._xs_i >= len(self._xs_buf):
            n = len(self.pos)
            sigma = self.radio.shadowing_sigma
            if sigma > 0:
                self._xs_buf = self.rng.normal(0.0, sigma, size=(self._chunk, n, n))
            else:
                self._xs_buf = np.zeros((1, n, n))
            self._xs_i = 0
        out = self._xs_buf[self._xs_i]
        self._xs_i += 1 if self.radio.shadowing_sigma > 0 else 0
        return out

    def uniform(self) -> np.ndarray:
        """One U[0, 1) number per agent."""
        if self._u_i >= len(self._u_buf):
            self._u_buf = self.rng.random((self._chunk, self.n_agents))
            self._u_i = 0
        out = self._u_buf[self._u_i]
        self._u_i += 1
        return out

    @property
    def at_source(self) -> int:
        return self.top

    @property
    def packets_held(self) -> int:
        return int((self.held >= 0).sum())

    @property
    def done(self) -> bool:
        return self.t >= self.T or self.delivered >= self.p

    def conservation_ok(self) -> bool:
        return self.delivered + self.top + self.packets_held == self.p

    # -- phases -----------------------------------------------------------
    def step(self, controller: Controller) -> bool:
        if self.done:
            raise RuntimeError("step called on a terminated world")
        n = self.n_agents
        intents = controller.decide(self)
        d_sink0 = self.dist[:n, self.sink].copy()
        d_src0 = self.dist[:n, self.source].copy()
        held0 = self.held.copy()

        self.move(intents)
        self.refresh_geometry()
        transfers, transmitted, success, received = self.communicate(intents)

        node_dsink = self.dist[:, self.sink]
        delta_packet = np.where((intents.kind == MOVE) & (held0 >= 0), d_sink0 - node_dsink[:n], 0.0)
        for src, dst, _pid in transfers:
            gain = node_dsink[src] - node_dsink[dst]
            if src < n:
                delta_packet[src] += gain
            if dst < n:
                delta_packet[dst] += gain
        interacted = (held0 >= 0) | received
        outcome = StepOutcome(delta_packet, interacted, d_src0 - self.dist[:n, self.source],
                              transmitted, success, transfers)
        controller.learn(self, intents, outcome)
        if self.events is not None:
            self.events.append(self._event(transfers))
        self.t += 1
        return self.done

    def move(self, intents: Intents):
        K.move(self.n_agents, self.pos, intents.kind, intents.direction, intents.target_pos,
               intents.target_ok, float(self.env.speed), self.walls, self.clearance,
               np.array(self.env.bounds))

    def communicate(self, intents: Intents):
        """Jammer scan, SNIR checks and custody transfer. Returns transfers and per-agent flags."""
        r = self.radio
        xs = self.shadowing()
        pw = r.tx_power + 10.0 * np.log10(intents.power / 100.0)
        (self.top, self.delivered, transmitted, success, received, tr, nt) = K.communicate(
            self.n_agents, intents.kind, intents.dest, intents.channel, pw, self.held,
            self.stack, self.top, self.touched, self.contributions, self.delivered,
            self.channel, self.jammed, self.pl, xs, r.tx_power, r.noise_mw,
            r.snir_threshold, r.detection_floor, self.noise_db)
        transfers = [tuple(row) for row in tr[:nt].tolist()]
        return transfers, transmitted, success, received

    def _event(self, transfers) -> dict:
        n = self.n_agents
        return {
            "t": self.t,
            "pos": self.pos[:n].tolist(),
            "held": self.held.tolist(),
            "transfers": [list(tr) for tr in transfers],
            "jam": self.jammed.tolist(),
            "delivered": self.delivered,
            "at_source": self.top,
        }

    def write_events(self, path):
        with open(path, "w") as fh:
            for ev in self.events or []:
                fh.write(json.dumps(ev) + "\n")


def run_operation(world: World, controller: Controller) -> World:
    while not world.done:
        world.step(controller)
    return world
