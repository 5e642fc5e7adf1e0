"""Log-distance path loss, SNIR reception and the channel-scanning jammer."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

CHANNELS = (1, 6, 11)


@dataclass
class RadioConfig:
    tx_power: float = 20.0          # dBm, agents, network nodes and jammers alike
    pl0: float = 40.0               # dB at d0
    d0: float = 1.0                 # m
    exponent: float = 3.0
    shadowing_sigma: float = 4.0    # dB
    wall_loss: float = 10.0         # dB per wall crossed
    noise_floor: float = -96.0      # dBm
    snir_threshold: float = 10.0    # dB
    detection_margin: float = 6.0   # jammer detects signals above noise_floor + margin

    def __post_init__(self):
        if self.exponent < 2.0:
            raise ValueError("path loss exponent must be >= 2")
        if self.shadowing_sigma < 0:
            raise ValueError("shadowing sigma must be >= 0")

    @classmethod
    def from_dict(cls, d: dict | None) -> "RadioConfig":
        d = dict(d or {})
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown radio keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def noise_mw(self) -> float:
        return 10.0 ** (self.noise_floor / 10.0)

    @property
    def detection_floor(self) -> float:
        return self.noise_floor + self.detection_margin

    def nominal_range(self, tx_power: float | None = None) -> float:
        """Distance at which deterministic LDPL leaves exactly the SNIR threshold."""
        p = self.tx_power if tx_power is None else tx_power
        budget = p - self.noise_floor - self.snir_threshold - self.pl0
        return self.d0 * 10.0 ** (budget / (10.0 * self.exponent))


def power_dbm(radio: RadioConfig, percent) -> np.ndarray | float:
    """Transmit power for a percentage setting (100 -> full, 50 -> -3 dB)."""
    return radio.tx_power + 10.0 * np.log10(np.asarray(percent, dtype=float) / 100.0)


# --------------------------------------------------------------------------
# Geometry helpers for walls (segments stored as rows x1, y1, x2, y2)

def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_cross(p, q, walls) -> np.ndarray:
    """Boolean (..., W): does segment p-q properly intersect each wall segment.

    ``p`` and ``q`` broadcast against each other; the wall axis is appended.
    """
    walls = np.asarray(walls, dtype=float).reshape(-1, 4)
    p = np.asarray(p, dtype=float)[..., None, :]
    q = np.asarray(q, dtype=float)[..., None, :]
    x1, y1, x2, y2 = walls[:, 0], walls[:, 1], walls[:, 2], walls[:, 3]
    o1 = _orient(p[..., 0], p[..., 1], q[..., 0], q[..., 1], x1, y1)
    o2 = _orient(p[..., 0], p[..., 1], q[..., 0], q[..., 1], x2, y2)
    o3 = _orient(x1, y1, x2, y2, p[..., 0], p[..., 1])
    o4 = _orient(x1, y1, x2, y2, q[..., 0], q[..., 1])
    return (o1 * o2 < 0) & (o3 * o4 < 0)


def count_walls(p, q, walls) -> np.ndarray:
    walls = np.asarray(walls, dtype=float).reshape(-1, 4)
    if len(walls) == 0:
        return np.zeros(np.broadcast_shapes(np.shape(p)[:-1], np.shape(q)[:-1]), dtype=int)
    return segments_cross(p, q, walls).sum(axis=-1)


def nearest_points_on_walls(points, walls):
    """For each point (P, 2) the closest point on every wall: returns (P, W, 2), (P, W)."""
    walls = np.asarray(walls, dtype=float).reshape(-1, 4)
    a = walls[None, :, 0:2]
    ab = walls[None, :, 2:4] - a
    ap = np.asarray(points, dtype=float)[:, None, :] - a
    denom = np.maximum((ab * ab).sum(-1), 1e-12)
    t = np.clip((ap * ab).sum(-1) / denom, 0.0, 1.0)
    nearest = a + t[..., None] * ab
    d = np.hypot(*(np.asarray(points, dtype=float)[:, None, :] - nearest).transpose(2, 0, 1))
    return nearest, d


# --------------------------------------------------------------------------
# Radio

def path_loss(a, b, radio: RadioConfig, walls=None, rng: np.random.Generator | None = None) -> float:
    """Path loss (dB) between two points: LDPL + shadowing + per-wall loss."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = float(np.hypot(*(b - a)))
    pl = radio.pl0 + 10.0 * radio.exponent * math.log10(max(d, radio.d0) / radio.d0)
    if walls is not None and len(walls):
        pl += radio.wall_loss * int(count_walls(a, b, walls))
    if rng is not None and radio.shadowing_sigma > 0:
        pl += rng.normal(0.0, radio.shadowing_sigma)
    return pl


def path_loss_matrix(pos: np.ndarray, radio: RadioConfig, walls=None) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic pairwise path loss (n, n) and distances (n, n)."""
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    pl = radio.pl0 + 10.0 * radio.exponent * np.log10(np.maximum(dist, radio.d0) / radio.d0)
    if walls is not None and len(walls):
        iu = np.triu_indices(len(pos), 1)
        n_w = count_walls(pos[iu[0]], pos[iu[1]], walls)
        extra = np.zeros_like(pl)
        extra[iu] = n_w
        pl = pl + radio.wall_loss * (extra + extra.T)
    return pl, dist


def snir_db(signal_dbm: float, interferers_dbm, noise_floor: float) -> float:
    """SNIR of a signal against thermal noise plus summed interferers (all dBm)."""
    interf = np.asarray(interferers_dbm, dtype=float).ravel()
    total_mw = 10.0 ** (noise_floor / 10.0) + float(np.sum(10.0 ** (interf / 10.0)))
    return signal_dbm - 10.0 * math.log10(total_mw)


def reception_ok(signal_dbm: float, interferers_dbm, radio: RadioConfig) -> bool:
    return snir_db(signal_dbm, interferers_dbm, radio.noise_floor) >= radio.snir_threshold


def jammer_step(received_dbm, channels, radio: RadioConfig) -> int:
    """Channel the jammer will block this step (0 means idle).

    ``received_dbm[k]`` is the power the jammer receives from active
    transmission ``k`` on ``channels[k]``. The lowest-numbered channel with a
    transmission above the detection floor is chosen.
    """
    received_dbm = np.asarray(received_dbm, dtype=float)
    channels = np.asarray(channels, dtype=int)
    heard = channels[received_dbm >= radio.detection_floor]
    return int(heard.min()) if heard.size else 0
