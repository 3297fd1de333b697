"""Seeded random walks over a transition graph."""

from __future__ import annotations

import json
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from todsynth.errors import EmptyInput, InvalidGraph
from todsynth.graph import EdgeSpec, TransitionGraph, outgoing_distribution, successor, validate

DEFAULT_MAX_LEN = 60
MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed for item ``index`` of a run seeded with ``master_seed``."""
    return splitmix64(splitmix64(master_seed & MASK64) ^ (index & MASK64))


@dataclass(frozen=True)
class WalkStep:
    node: str
    edge: EdgeSpec | None


@dataclass(frozen=True)
class RandomWalk:
    walk_id: int
    seed: int
    steps: tuple[WalkStep, ...]
    truncated: bool

    @property
    def exchanges(self) -> list[WalkStep]:
        """Steps that carry an edge, i.e. one system + one user turn each."""
        return [s for s in self.steps if s.edge is not None]

    @property
    def intents(self) -> list[str]:
        return [s.edge.intent for s in self.steps if s.edge is not None]

    def to_dict(self) -> dict:
        return {
            "walk_id": self.walk_id,
            "seed": self.seed,
            "truncated": self.truncated,
            "steps": [
                {"node": s.node, "intent": s.edge.intent if s.edge is not None else None}
                for s in self.steps
            ],
        }


def _ensure_valid(graph: TransitionGraph) -> None:
    report = validate(graph)
    if not report.ok:
        raise InvalidGraph(report)


def _choose(dist: Sequence[tuple[EdgeSpec, float]], u: float) -> EdgeSpec:
    acc = 0.0
    for edge, p in dist:
        acc += p
        if u < acc:
            return edge
    # float slack: u landed in the last 1e-9 of mass
    return next(e for e, p in reversed(dist) if p > 0)


def _walk(graph: TransitionGraph, seed: int, max_len: int, walk_id: int) -> RandomWalk:
    rng = random.Random(seed)
    node = graph.start_node
    steps: list[WalkStep] = []
    cache: dict[str, list[tuple[EdgeSpec, float]]] = {}
    while not graph.is_terminal(node):
        if len(steps) >= max_len:
            return RandomWalk(walk_id, seed, tuple(steps), truncated=True)
        dist = cache.get(node)
        if dist is None:
            dist = cache[node] = outgoing_distribution(graph, node)
        edge = _choose(dist, rng.random())
        steps.append(WalkStep(node, edge))
        node = successor(edge, node)
    steps.append(WalkStep(node, None))
    return RandomWalk(walk_id, seed, tuple(steps), truncated=False)


def sample_walk(graph: TransitionGraph, seed: int, max_len: int = DEFAULT_MAX_LEN,
                *, walk_id: int = 0, check: bool = True) -> RandomWalk:
    """Sample one walk from the start node until a terminal or ``max_len`` edges."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if check:
        _ensure_valid(graph)
    return _walk(graph, seed, max_len, walk_id)


def sample_walks(graph: TransitionGraph, n: int, master_seed: int,
                 max_len: int = DEFAULT_MAX_LEN, *, workers: int = 1) -> list[RandomWalk]:
    """Sample ``n`` walks; walk ``i`` uses ``derive_seed(master_seed, i)``.

    The result does not depend on ``workers``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    _ensure_valid(graph)

    def one(i: int) -> RandomWalk:
        return _walk(graph, derive_seed(master_seed, i), max_len, i)

    if workers <= 1:
        return [one(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n)))


def intent_frequencies(walks: Iterable[RandomWalk]) -> dict[str, float]:
    """Relative frequency of each intent over all edges of all walks."""
    walks = list(walks)
    if not walks:
        raise EmptyInput("intent_frequencies needs at least one walk")
    counts = Counter(i for w in walks for i in w.intents)
    return normalize_counts(counts)


def normalize_counts(counts: Counter) -> dict[str, float]:
    total = sum(counts.values())
    if total == 0:
        return {}
    return {k: counts[k] / total for k in sorted(counts)}


def replay_errors(graph: TransitionGraph, walk: RandomWalk) -> list[str]:
    """Legality check of a walk against the graph; empty list means legal."""
    problems = []
    if not walk.steps or walk.steps[0].node != graph.start_node:
        problems.append("walk does not begin at the start node")
        return problems
    for i, step in enumerate(walk.steps):
        if step.edge is None:
            if i != len(walk.steps) - 1:
                problems.append(f"step {i}: edge-less step before the end")
            elif not graph.is_terminal(step.node):
                problems.append(f"step {i}: walk ends at non-terminal {step.node!r}")
            continue
        if graph.is_terminal(step.node):
            problems.append(f"step {i}: leaves terminal node {step.node!r}")
            continue
        legal = [e for e, p in outgoing_distribution(graph, step.node) if p > 0.0]
        if step.edge not in legal:
            problems.append(f"step {i}: intent {step.edge.intent!r} not legal at {step.node!r}")
        if i + 1 < len(walk.steps):
            expected = successor(step.edge, step.node)
            if walk.steps[i + 1].node != expected:
                problems.append(f"step {i + 1}: expected node {expected!r}")
    last = walk.steps[-1]
    if walk.truncated and last.edge is None:
        problems.append("truncated walk ends with an edge-less step")
    if not walk.truncated and last.edge is not None:
        problems.append("complete walk does not end at a terminal node")
    return problems


def write_walks(walks: Iterable[RandomWalk], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in walks:
            fh.write(json.dumps(w.to_dict(), sort_keys=True) + "\n")


def walk_from_dict(graph: TransitionGraph, raw: dict) -> RandomWalk:
    """Rebuild a walk exported by :func:`write_walks` against ``graph``."""
    steps = []
    for s in raw["steps"]:
        edge = None
        if s["intent"] is not None:
            candidates = [e for e, _ in outgoing_distribution(graph, s["node"]) if e.intent == s["intent"]]
            if not candidates:
                raise ValueError(f"intent {s['intent']!r} not available at {s['node']!r}")
            edge = candidates[0]
        steps.append(WalkStep(s["node"], edge))
    return RandomWalk(raw["walk_id"], raw["seed"], tuple(steps), raw["truncated"])


def read_walks(graph: TransitionGraph, path: str | Path) -> list[RandomWalk]:
    with open(path, encoding="utf-8") as fh:
        return [walk_from_dict(graph, json.loads(line)) for line in fh if line.strip()]

