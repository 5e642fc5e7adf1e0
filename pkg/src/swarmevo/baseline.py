"""Hand-written homogeneous virtual-force swarm used as a reference point.

Not evolved and not learned: every agent runs the same policy.

* holding a packet: transmit with probability 1 / (1 + holding neighbours);
  send to the sink when it is a neighbour, else to the neighbour making the
  most progress toward the sink, else carry it;
* free, next to the source and nearer to it than any free neighbour: collect;
* otherwise move under a virtual force: attraction to the agent's slot on
  the source-sink line, repulsion from neighbours closer than ``d_th`` and,
  when the measured noise is high, a pull back toward the source.
"""
from __future__ import annotations

import numpy as np

from .agents import perceive
from .world import COLLECT, MOVE, SEND, TOWARD, Intents, World


class VirtualForceSwarm:
    def __init__(self, repulsion: float = 1.0, retreat: float = 1.0, collect_channel: int = 6):
        self.repulsion = repulsion
        self.retreat = retreat
        self.collect_channel = collect_channel

    def slots(self, world: World) -> np.ndarray:
        n = world.n_agents
        d = world.env.source_sink_distance
        x = d * (np.arange(n) + 1) / (n + 1)
        return np.stack([x, np.zeros(n)], axis=1)

    def decide(self, world: World) -> Intents:
        n = world.n_agents
        obs = perceive(world)
        it = Intents.idle(n)
        pos = world.pos
        slots = self.slots(world)
        d_sink = world.dist[:, world.sink]
        d_th = world.env.d_th
        u = world.uniform()
        holding_nb = (obs.neighbors[:, :n] & (world.held >= 0)[None, :]).sum(axis=1)
        for i in range(n):
            if obs.has_packet[i]:
                if u[i] * (1 + holding_nb[i]) >= 1:
                    # back off so that neighbouring holders do not all transmit at once
                    if not obs.neighbors[i, world.sink]:
                        it.kind[i], it.direction[i] = MOVE, TOWARD
                        it.target_pos[i], it.target_ok[i] = pos[world.sink], True
                    continue
                if obs.neighbors[i, world.sink]:
                    it.kind[i], it.dest[i] = SEND, world.sink
                    continue
                fwd = obs.selectors[i, 1]
                if fwd >= 0 and d_sink[fwd] < d_sink[i] and (fwd >= n or world.held[fwd] < 0):
                    it.kind[i], it.dest[i] = SEND, fwd
                    continue
                it.kind[i], it.direction[i] = MOVE, TOWARD
                it.target_pos[i], it.target_ok[i] = pos[world.sink], True
                continue
            d_src = world.dist[:n, world.source]
            rivals = obs.neighbors[i, :n] & (world.held < 0) & (d_src < d_src[i])
            if obs.neighbors[i, world.source] and world.top > 0 and not rivals.any():
                # only the free agent nearest the source asks, on its own channel
                it.kind[i], it.dest[i], it.channel[i] = COLLECT, world.source, self.collect_channel
                continue
            force = slots[i] - pos[i]
            force = force / max(np.hypot(*force), 1.0)
            for j in np.flatnonzero(obs.neighbors[i, :n]):
                v = pos[i] - pos[j]
                dj = np.hypot(*v)
                if 1e-9 < dj < d_th:
                    force += self.repulsion * (1 - dj / d_th) * v / dj
            if obs.noise[i].max() > world.env.p_rs:
                back = pos[world.source] - pos[i]
                force += self.retreat * back / max(np.hypot(*back), 1e-9)
            if np.hypot(*force) > 1e-6:
                it.kind[i], it.direction[i] = MOVE, TOWARD
                it.target_pos[i], it.target_ok[i] = pos[i] + force, True
        return it

    def learn(self, world: World, intents: Intents, outcome) -> None:
        pass
