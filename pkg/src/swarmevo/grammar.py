"""Grammar-driven rule generation.

Integer genomes are mapped to ``condition => action`` rules by leftmost
derivation over a small production table. Each production choice with more
than one option consumes one codon (``codon % n_options``); single-option
productions are free. Reading wraps to the start of the genome when it runs
out of codons.

Four table variants exist: ``standard`` plus ``channel``, ``power`` and
``both`` which add transmission channel and/or power selection.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_COND_DEPTH = 3
MAX_WRAPS = 4
DIGIT_MAX = 255
GENOME_LEN = 16

VARIANTS = ("standard", "channel", "power", "both")

CHANNELS = (1, 6, 11)
POWERS = (50, 100)

RHS_TERMS = ("d_so", "d_si", "d_c", "d_sink", "d_source")
LHS_TERMS = ("d_so", "d_si", "d_c", "d_th", "net", "xi")
OPERATORS = ("<", ">", "=")
DIRECTIONS = ("toward", "away", "orbit")
MOVE_TARGETS = ("so", "si", "c", "source", "sink", "v_close", "o")
SEND_TARGETS = ("so", "si", "c", "source", "sink")


def _productions(variant: str) -> dict[str, list[tuple[str, ...]]]:
    if variant not in VARIANTS:
        raise ValueError(f"unknown grammar variant {variant!r}")
    chan = variant in ("channel", "both")
    power = variant in ("power", "both")
    extended = variant != "standard"

    tail = (("<channel>",) if chan else ()) + (("<power>",) if power else ())
    lhs = list(LHS_TERMS if extended else LHS_TERMS[:-1])
    return {
        "<cond>": [
            ("<cond>", "&", "<cond>"),
            ("<noise>",) if chan else ("NI<=P_rs",),
            ("<packet>",),
            ("<neigh>",),
            ("<distance>",),
        ],
        "<noise>": [("noise_on", "<channel>")],
        "<packet>": [("has_packet",), ("no_packet",)],
        "<neigh>": [("net_node",), ("no_net_node",)],
        "<distance>": [("<rhs>", "<op>", "<lhs>")],
        "<rhs>": [(t,) for t in RHS_TERMS],
        "<op>": [(t,) for t in OPERATORS],
        "<lhs>": [(t,) for t in lhs],
        "<action>": [("move", "<direction>", "<move_target>"), ("<networking>",)],
        "<direction>": [(t,) for t in DIRECTIONS],
        "<move_target>": [(t,) for t in MOVE_TARGETS],
        "<networking>": [("<collect>",), ("<send>",)],
        "<collect>": [("collect",) + tail],
        "<send>": [("send", "<send_target>") + tail],
        "<send_target>": [(t,) for t in SEND_TARGETS],
        "<channel>": [(str(c),) for c in CHANNELS],
        "<power>": [(str(p),) for p in POWERS],
    }


GRAMMARS = {v: _productions(v) for v in VARIANTS}


# --------------------------------------------------------------------------
# AST nodes. Frozen so that structural equality and hashing come for free.

@dataclass(frozen=True)
class Conjunction:
    left: "Condition"
    right: "Condition"

    def __str__(self):
        return f"{_paren(self.left)} & {_paren(self.right)}"


@dataclass(frozen=True)
class NoiseLeq:
    """Noise on ``channel`` (or the agent's current channel when None) <= P_rs."""
    channel: int | None = None

    def __str__(self):
        if self.channel is None:
            return "NI <= P_rs"
        return f"noise[{self.channel}] <= P_rs"


@dataclass(frozen=True)
class PacketHeld:
    exists: bool

    def __str__(self):
        return "has_packet" if self.exists else "no_packet"


@dataclass(frozen=True)
class NetworkNodeNeighbor:
    exists: bool

    def __str__(self):
        return "net_node_in_N" if self.exists else "no_net_node_in_N"


@dataclass(frozen=True)
class DistanceCompare:
    rhs: str
    op: str
    lhs: str

    def __str__(self):
        return f"{self.rhs} {self.op} {self.lhs}"


Condition = Conjunction | NoiseLeq | PacketHeld | NetworkNodeNeighbor | DistanceCompare


def _paren(c):
    return f"({c})" if isinstance(c, Conjunction) else str(c)


@dataclass(frozen=True)
class Move:
    direction: str
    target: str

    def __str__(self):
        return f"move {self.direction} {self.target}"


@dataclass(frozen=True)
class Collect:
    channel: int = 1
    power: int = 100

    def __str__(self):
        return f"collect source ch{self.channel} {self.power}%"


@dataclass(frozen=True)
class Send:
    target: str
    channel: int = 1
    power: int = 100

    def __str__(self):
        return f"send {self.target} ch{self.channel} {self.power}%"


Action = Move | Collect | Send


# --------------------------------------------------------------------------
# Atom / action tables used by the vectorised rule matcher.

def _build_atoms():
    atoms: list = [NoiseLeq(None)]
    atoms += [NoiseLeq(c) for c in CHANNELS]
    atoms += [PacketHeld(True), PacketHeld(False)]
    atoms += [NetworkNodeNeighbor(True), NetworkNodeNeighbor(False)]
    atoms += [DistanceCompare(r, o, l)
              for r, o, l in itertools.product(RHS_TERMS, OPERATORS, LHS_TERMS)]
    return tuple(atoms)


ATOMS = _build_atoms()
ATOM_INDEX = {a: i for i, a in enumerate(ATOMS)}
N_ATOMS = len(ATOMS)


def _build_actions():
    acts: list = [Move(d, t) for d in DIRECTIONS for t in MOVE_TARGETS]
    acts += [Collect(c, p) for c in CHANNELS for p in POWERS]
    acts += [Send(t, c, p) for t in SEND_TARGETS for c in CHANNELS for p in POWERS]
    return tuple(acts)


ACTIONS = _build_actions()
ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}
N_ACTIONS = len(ACTIONS)


def condition_atoms(cond: Condition) -> frozenset[int]:
    """Indices into ATOMS whose conjunction is equivalent to ``cond``."""
    if isinstance(cond, Conjunction):
        return condition_atoms(cond.left) | condition_atoms(cond.right)
    return frozenset((ATOM_INDEX[cond],))


def condition_depth(cond: Condition) -> int:
    if isinstance(cond, Conjunction):
        return 1 + max(condition_depth(cond.left), condition_depth(cond.right))
    return 0


# --------------------------------------------------------------------------
# Decoding

class _Reader:
    def __init__(self, digits: Sequence[int]):
        if len(digits) == 0:
            raise ValueError("genome must be non-empty")
        self.digits = digits
        self.reads = 0

    @property
    def wraps(self):
        return self.reads // len(self.digits)

    def next(self) -> int:
        d = self.digits[self.reads % len(self.digits)]
        self.reads += 1
        return int(d)


def _expand(symbol, table, reader, depth, trace):
    options = table[symbol]
    if symbol == "<cond>" and (depth >= MAX_COND_DEPTH or reader.wraps >= MAX_WRAPS):
        options = [o for o in options if symbol not in o]
    if len(options) > 1:
        choice = reader.next() % len(options)
    else:
        choice = 0
    option = options[choice]
    trace.append((symbol, option))
    children = []
    for sym in option:
        if sym in table:
            next_depth = depth + 1 if symbol == "<cond>" and sym == "<cond>" else depth
            children.append(_expand(sym, table, reader, next_depth, trace))
        else:
            children.append(sym)
    return symbol, option, children


def _terminals(tree) -> list[str]:
    _, _, children = tree
    out = []
    for c in children:
        out.extend(_terminals(c) if isinstance(c, tuple) else [c])
    return out


def _to_condition(tree) -> Condition:
    _, option, children = tree
    if option[0] == "<cond>":
        return Conjunction(_to_condition(children[0]), _to_condition(children[2]))
    words = _terminals(tree)
    head = words[0]
    if head == "NI<=P_rs":
        return NoiseLeq(None)
    if head == "noise_on":
        return NoiseLeq(int(words[1]))
    if head in ("has_packet", "no_packet"):
        return PacketHeld(head == "has_packet")
    if head in ("net_node", "no_net_node"):
        return NetworkNodeNeighbor(head == "net_node")
    rhs, op, lhs = words
    return DistanceCompare(rhs, op, lhs)


def _to_action(tree) -> Action:
    words = _terminals(tree)
    if words[0] == "move":
        return Move(words[1], words[2])
    rest = words[1:] if words[0] == "collect" else words[2:]
    channel, power = 1, 100
    for w in rest:
        v = int(w)
        if v in POWERS:
            power = v
        else:
            channel = v
    if words[0] == "collect":
        return Collect(channel, power)
    return Send(words[1], channel, power)


def decode(genome: Sequence[int], start: str = "<cond>", variant: str = "standard"):
    """Decode a genome from ``start`` ("<cond>" or "<action>") into an AST."""
    table = GRAMMARS[variant]
    reader = _Reader(genome)
    tree = _expand(start, table, reader, 0, [])
    if start == "<cond>":
        return _to_condition(tree)
    if start == "<action>":
        return _to_action(tree)
    raise ValueError(f"unsupported start symbol {start!r}")


def decode_trace(genome: Sequence[int], start: str = "<cond>", variant: str = "standard"):
    """Return ``(ast, reads, [(nonterminal, chosen option), ...])`` for inspection."""
    table = GRAMMARS[variant]
    reader = _Reader(genome)
    trace: list = []
    tree = _expand(start, table, reader, 0, trace)
    ast = _to_condition(tree) if start == "<cond>" else _to_action(tree)
    return ast, reader.reads, trace


# --------------------------------------------------------------------------
# Rules

@dataclass(eq=False)
class Rule:
    condition: Condition
    action: Action
    condition_genome: tuple[int, ...]
    action_genome: tuple[int, ...]
    q: float = 0.0
    strength: float = 0.0
    error: float = 0.0
    uses: int = 0
    origin: str = "random"
    atoms: frozenset[int] = field(init=False, repr=False)
    action_id: int = field(init=False, repr=False)

    def __post_init__(self):
        self.atoms = condition_atoms(self.condition)
        self.action_id = ACTION_INDEX[self.action]

    @property
    def key(self):
        """Structural identity; ignores genomes and learning statistics."""
        return self.condition, self.action

    def copy(self) -> "Rule":
        """Independent copy (shares the immutable ASTs and genomes)."""
        out = object.__new__(Rule)
        out.__dict__.update(self.__dict__)
        return out

    def fresh_copy(self, origin: str | None = None) -> "Rule":
        return dataclasses.replace(self, q=0.0, strength=0.0, error=0.0, uses=0,
                                   origin=self.origin if origin is None else origin)

    def __str__(self):
        return f"{self.condition} => {self.action}"


def rule_from_genomes(cond_genome: Sequence[int], action_genome: Sequence[int],
                      variant: str = "standard", origin: str = "random") -> Rule:
    cg = tuple(int(d) for d in cond_genome)
    ag = tuple(int(d) for d in action_genome)
    return Rule(decode(cg, "<cond>", variant), decode(ag, "<action>", variant),
                cg, ag, origin=origin)


def random_rule(rng: np.random.Generator, variant: str = "standard",
                genome_len: int = GENOME_LEN) -> Rule:
    if genome_len < 1:
        raise ValueError("genome_len must be >= 1")
    digits = rng.integers(0, DIGIT_MAX + 1, size=2 * genome_len)
    return rule_from_genomes(digits[:genome_len], digits[genome_len:], variant)


def random_rule_set(rng: np.random.Generator, size: int, variant: str = "standard",
                    genome_len: int = GENOME_LEN) -> list[Rule]:
    return [random_rule(rng, variant, genome_len) for _ in range(size)]


def format_rule_set(rules: Sequence[Rule]) -> str:
    return "\n".join(str(r) for r in rules)
