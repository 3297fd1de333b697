"""Conversation records produced by the simulator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping


def canonical_json(obj: object) -> str:
    """Sorted keys, no whitespace, raw UTF-8: the byte-stable JSON used everywhere."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


ROLES = ("system", "user", "suggestions", "retriever", "item_information")
STATEFUL_ROLES = ("system", "user")


@dataclass
class StateVariables:
    """Monitored conversation memory: current query, counters, lists."""

    query: str | None = None
    counters: dict[str, int] = field(default_factory=dict)
    lists: dict[str, list[str]] = field(default_factory=dict)
    scalars: dict[str, str] = field(default_factory=dict)

    def counter(self, name: str) -> int:
        return self.counters.get(name, 0)

    def items(self, name: str) -> list[str]:
        return self.lists.setdefault(name, [])

    def snapshot(self) -> dict:
        return {
            "query": self.query,
            "counters": dict(sorted(self.counters.items())),
            "lists": {k: list(v) for k, v in sorted(self.lists.items())},
            "scalars": dict(sorted(self.scalars.items())),
        }


@dataclass(frozen=True)
class SystemState:
    intent: str
    slots: Mapping[str, str] = field(default_factory=dict)
    documents: tuple[str, ...] = ()


@dataclass(frozen=True)
class DialogueTurn:
    role: str
    text: str
    state: SystemState | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class TrainingExample:
    example_id: str
    walk_id: int
    target_doc: str
    turns: tuple[DialogueTurn, ...]
    states: tuple[SystemState, ...]

    @property
    def user_turns(self) -> list[DialogueTurn]:
        return [t for t in self.turns if t.role == "user"]

    @property
    def system_turns(self) -> list[DialogueTurn]:
        return [t for t in self.turns if t.role == "system"]

    def problems(self) -> list[str]:
        """Invariant violations; empty when the example is well formed."""
        out = []
        main = [t for t in self.turns if t.role in STATEFUL_ROLES]
        if not main or main[0].role != "system":
            out.append("conversation must open with a system turn")
        for i, t in enumerate(main):
            want = "system" if i % 2 == 0 else "user"
            if t.role != want:
                out.append(f"turn {i}: expected {want}, got {t.role}")
                break
        for t in self.turns:
            if (t.role in STATEFUL_ROLES) != (t.state is not None):
                out.append(f"{t.role} turn has {'no ' if t.state is None else ''}state")
        user_states = tuple(t.state for t in self.turns if t.role == "user")
        if user_states != self.states:
            out.append("states do not align with user turns")
        return out
