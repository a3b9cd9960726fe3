"""Event-flow graphs, candidate input sequences and their weights.

Weighted sequences are root-anchored simple paths through the app's
event-flow graph. Each edge carries ``(S, C)``: system-API calls and
function invocations plus block transitions incurred by that interaction.
A path's stats are the sums over its edges and its weight is
``alpha * S + beta * C``.

Random sequences are Monkey-style event lists fully determined by a 64-bit
seed. The generator is SplitMix64::

    state = (state + 0x9E3779B97F4A7C15) mod 2**64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
    return z ^ (z >> 31)

Every event consumes four outputs ``(k, a, b, c)``:
kind = EVENT_KINDS[k >> 62], x = a % SCREEN_W, y = b % SCREEN_H.
For a swipe the end point is ``(c % SCREEN_W, (c >> 32) % SCREEN_H)``;
for text, ``c % 16 + 1`` characters are typed, character i being
``ALPHABET[(c >> 4*i) % 36]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .errors import EfgError, PathError

MASK64 = (1 << 64) - 1
SCREEN_W, SCREEN_H = 1080, 1920
EVENT_KINDS = ("tap", "swipe", "text", "back")
_TEXT_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"

DEFAULT_MAX_LEN = 12
DEFAULT_MAX_PATHS = 500
DEFAULT_RANDOM_LENGTH = 20


@dataclass(frozen=True)
class SequenceStats:
    S: int = 0
    C: int = 0

    def __post_init__(self):
        if self.S < 0 or self.C < 0:
            raise ValueError("S and C must be nonnegative")

    def __add__(self, other: "SequenceStats") -> "SequenceStats":
        return SequenceStats(self.S + other.S, self.C + other.C)


@dataclass(frozen=True)
class WeightConfig:
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ValueError("alpha and beta must lie in (0, 1)")
        if not math.isclose(self.alpha + self.beta, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError("alpha + beta must equal 1")


def weight(stats: SequenceStats, cfg: WeightConfig = WeightConfig()) -> float:
    return cfg.alpha * stats.S + cfg.beta * stats.C


class EventFlowGraph:
    """Directed graph of UI components, rooted at the app's launch screen."""

    def __init__(self, root: str, edges: Mapping[tuple[str, str], SequenceStats] | Iterable,
                 nodes: Iterable[str] = ()):
        if isinstance(edges, Mapping):
            edge_map = {(str(u), str(v)): s for (u, v), s in edges.items()}
        else:
            edge_map = {(str(u), str(v)): SequenceStats() for u, v in edges}
        node_set = {str(root), *map(str, nodes)}
        for u, v in edge_map:
            node_set.update((u, v))
        self.root = str(root)
        self.nodes: tuple[str, ...] = tuple(sorted(node_set))
        self.edges: dict[tuple[str, str], SequenceStats] = dict(sorted(edge_map.items()))
        self._succ: dict[str, tuple[str, ...]] = {n: () for n in self.nodes}
        for u, v in self.edges:
            self._succ[u] += (v,)
        self._succ = {n: tuple(sorted(vs)) for n, vs in self._succ.items()}
        unreachable = set(self.nodes) - self._reachable()
        if unreachable:
            raise EfgError(f"nodes unreachable from root {self.root!r}: {sorted(unreachable)}")

    def _reachable(self) -> set[str]:
        seen, stack = {self.root}, [self.root]
        while stack:
            for v in self._succ[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def successors(self, node: str) -> tuple[str, ...]:
        return self._succ[node]

    def path_stats(self, path: Sequence[str]) -> SequenceStats:
        if not path or path[0] != self.root:
            raise PathError(f"path must start at root {self.root!r}: {list(path)}")
        total = SequenceStats()
        for u, v in zip(path, path[1:]):
            try:
                total = total + self.edges[(u, v)]
            except KeyError:
                raise PathError(f"no edge {u!r} -> {v!r}") from None
        return total

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "nodes": list(self.nodes),
            "edges": [{"from": u, "to": v, "S": s.S, "C": s.C} for (u, v), s in self.edges.items()],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EventFlowGraph":
        if "root" not in data:
            raise EfgError("EFG description needs a root")
        edges = {}
        for e in data.get("edges", []):
            if isinstance(e, Mapping):
                u, v = e["from"], e["to"]
                stats = SequenceStats(int(e.get("S", 0)), int(e.get("C", 0)))
            else:
                u, v, *rest = e
                stats = SequenceStats(*map(int, rest[:2])) if rest else SequenceStats()
            edges[(str(u), str(v))] = stats
        return cls(data["root"], edges, data.get("nodes", ()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventFlowGraph):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"EventFlowGraph(root={self.root!r}, nodes={len(self.nodes)}, edges={len(self.edges)})"


def load_efg(path: str | Path) -> EventFlowGraph:
    """Read an EFG from YAML (or JSON, which YAML accepts)."""
    with open(path, encoding="utf-8") as fh:
        return EventFlowGraph.from_dict(yaml.safe_load(fh))


def save_efg(efg: EventFlowGraph, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(efg.to_dict(), indent=1) + "\n", encoding="utf-8")
    return path


def enumerate_paths(efg: EventFlowGraph, max_len: int = DEFAULT_MAX_LEN,
                    max_paths: int = DEFAULT_MAX_PATHS) -> list[tuple[str, ...]]:
    """Simple paths from the root with at most ``max_len`` nodes.

    Produced in lexicographic order of node ids (a prefix sorts before its
    extensions), truncated after ``max_paths``.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    out: list[tuple[str, ...]] = []
    # stack of (path, on_path); children pushed in reverse so the smallest pops first
    stack = [((efg.root,), frozenset((efg.root,)))]
    while stack and len(out) < max_paths:
        path, on_path = stack.pop()
        out.append(path)
        if len(path) == max_len:
            continue
        for v in reversed(efg.successors(path[-1])):
            if v not in on_path:
                stack.append((path + (v,), on_path | {v}))
    return out


@dataclass
class WeightedSequence:
    path: tuple[str, ...]
    stats: SequenceStats
    weight: float
    explored: bool = False

    @property
    def descriptor(self) -> dict:
        return {"type": "weighted", "path": list(self.path), "S": self.stats.S,
                "C": self.stats.C, "weight": self.weight}


def build_pool(efg: EventFlowGraph, cfg: WeightConfig = WeightConfig(),
               max_len: int = DEFAULT_MAX_LEN,
               max_paths: int = DEFAULT_MAX_PATHS) -> list[WeightedSequence]:
    pool = []
    for path in enumerate_paths(efg, max_len, max_paths):
        stats = efg.path_stats(path)
        pool.append(WeightedSequence(path, stats, weight(stats, cfg)))
    return pool


def next_weighted(pool: Sequence[WeightedSequence]) -> WeightedSequence | None:
    """Pop the heaviest unexplored sequence: ties go to the shorter, then lexicographically smaller path."""
    best = None
    for seq in pool:
        if seq.explored:
            continue
        if best is None or (-seq.weight, len(seq.path), seq.path) < (-best.weight, len(best.path), best.path):
            best = seq
    if best is not None:
        best.explored = True
    return best


_GAMMA = 0x9E3779B97F4A7C15


def splitmix64_block(seed: int, n: int) -> list[int]:
    """The first ``n`` SplitMix64 outputs for ``seed``, computed in one vectorized pass.

    The generator state after i steps is ``seed + i * gamma`` (mod 2**64),
    so every output can be mixed independently.
    """
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z.tolist()


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


@dataclass(frozen=True)
class RandomEvent:
    kind: str
    x: int
    y: int
    x2: int | None = None
    y2: int | None = None
    text: str | None = None


@dataclass(frozen=True)
class RandomSequence:
    seed: int
    length: int = DEFAULT_RANDOM_LENGTH
    events: tuple[RandomEvent, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("random sequence length must be >= 1")
        if not self.events:
            object.__setattr__(self, "events", tuple(random_sequence(self.seed, self.length)))

    @property
    def descriptor(self) -> dict:
        return {"type": "random", "seed": self.seed, "length": self.length}


def random_sequence(seed: int, length: int) -> list[RandomEvent]:
    if length < 1:
        raise ValueError("length must be >= 1")
    draws = splitmix64_block(seed, 4 * length)
    events = []
    for i in range(length):
        k, a, b, c = draws[4 * i:4 * i + 4]
        kind = EVENT_KINDS[k >> 62]
        x, y = a % SCREEN_W, b % SCREEN_H
        if kind == "swipe":
            events.append(RandomEvent(kind, x, y, x2=c % SCREEN_W, y2=(c >> 32) % SCREEN_H))
        elif kind == "text":
            text = "".join(_TEXT_ALPHABET[(c >> (4 * i)) % len(_TEXT_ALPHABET)]
                           for i in range(c % 16 + 1))
            events.append(RandomEvent(kind, x, y, text=text))
        else:
            events.append(RandomEvent(kind, x, y))
    return events


@dataclass(frozen=True)
class Walk:
    """Components visited and edges taken while running a sequence."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    stats: SequenceStats


def path_walk(efg: EventFlowGraph, path: Sequence[str]) -> Walk:
    stats = efg.path_stats(path)
    return Walk(tuple(path), tuple(zip(path, path[1:])), stats)


def replay(efg: EventFlowGraph, events: Iterable[RandomEvent]) -> Walk:
    """Drive the graph with random events.

    A tap activates the successor picked by the touch position, back returns
    to the previous component, swipes and text input stay put.
    """
    stack = [efg.root]
    visited = [efg.root]
    taken = []
    stats = SequenceStats()
    for ev in events:
        cur = stack[-1]
        if ev.kind == "back":
            if len(stack) > 1:
                stack.pop()
                visited.append(stack[-1])
        elif ev.kind == "tap":
            succ = efg.successors(cur)
            if succ:
                nxt = succ[(ev.x * SCREEN_H + ev.y) % len(succ)]
                stats = stats + efg.edges[(cur, nxt)]
                taken.append((cur, nxt))
                stack.append(nxt)
                visited.append(nxt)
    return Walk(tuple(visited), tuple(taken), stats)
