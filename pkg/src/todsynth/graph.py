"""State transition graph: schema, loading, validation and edge distributions.

Nodes are system states, edges are user intents.  Global edges are legal from
every non-terminal node and either bounce back to the node they left
(``resume``) or move the conversation elsewhere (``redirect``).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

from todsynth.errors import GlobalMassExceedsOne, ParseError, SchemaError, TerminalNode

PROB_TOL = 1e-9

SLOT_SOURCES = ("query-variable", "document-field", "list-index", "literal-generator")
EFFECT_OPS = ("increment", "set", "reset", "append", "remove", "clear")
EFFECT_ITEMS = ("target", "extra", "target_or_extra", "last", "random")
EXTRA_POOLS = ("same_category", "any")
RETURN_MODES = ("resume", "redirect")
QUERY_TYPES = ("specific", "generic")


@dataclass(frozen=True)
class SlotSpec:
    """Where a slot value comes from when the simulator fills it in.

    ``document-field`` reads ``field`` from the target document (``title``,
    ``doc_id``, ``body`` or ``metadata.<key>``).  ``list-index`` writes a
    1-based position: into the last shown results for ``list="results"``,
    otherwise a random position in the named state list.  ``literal-generator``
    draws from ``values`` or from the inclusive integer ``range``.
    """

    name: str
    source: str
    field: str | None = None
    list: str | None = None
    values: tuple[str, ...] | None = None
    range: tuple[int, int] | None = None


@dataclass(frozen=True)
class StateEffect:
    op: str
    counter: str | None = None
    list: str | None = None
    by: int = 1
    from_slot: str | None = None
    item: str | None = None
    pool: str | None = None


@dataclass(frozen=True)
class NodeSpec:
    id: str
    system_prompt_id: str
    state_effects: tuple[StateEffect, ...] = ()
    expose: tuple[str, ...] = ()


@dataclass(frozen=True)
class EdgeSpec:
    source: str | None
    to: str
    intent: str
    probability: float | None
    user_prompt_id: str
    slot_schema: tuple[SlotSpec, ...] = ()
    is_search: bool = False
    return_semantics: str | None = None
    query_type: str = "specific"
    is_select: bool = False
    k: int | None = None

    @property
    def is_global(self) -> bool:
        return self.source is None

    @property
    def resumes(self) -> bool:
        return self.return_semantics == "resume"


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.location}: {self.message}"


@dataclass
class ValidationReport:
    errors: list[ValidationIssue] = field(default_factory=list)
    warnings: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict[str, Any]:
        def rows(items):
            return [{"code": i.code, "location": i.location, "message": i.message} for i in items]

        return {"ok": self.ok, "errors": rows(self.errors), "warnings": rows(self.warnings)}


@dataclass(frozen=True)
class TransitionGraph:
    nodes: Mapping[str, NodeSpec]
    edges: tuple[EdgeSpec, ...]
    global_edges: tuple[EdgeSpec, ...]
    start_node: str
    terminal_nodes: frozenset[str]

    @cached_property
    def local_edges(self) -> dict[str, tuple[EdgeSpec, ...]]:
        out: dict[str, list[EdgeSpec]] = {n: [] for n in self.nodes}
        for e in self.edges:
            out.setdefault(e.source, []).append(e)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def detour_nodes(self) -> frozenset[str]:
        """Nodes used only as the reply state of ``resume`` globals."""
        entered = {e.to for e in self.edges} | {self.start_node}
        entered |= {g.to for g in self.global_edges if not g.resumes}
        return frozenset(g.to for g in self.global_edges if g.resumes) - entered

    @property
    def intents(self) -> list[str]:
        """Distinct user-intent labels in declaration order."""
        seen: dict[str, None] = {}
        for e in (*self.edges, *self.global_edges):
            seen.setdefault(e.intent, None)
        return list(seen)

    @property
    def search_intents(self) -> set[str]:
        return {e.intent for e in (*self.edges, *self.global_edges) if e.is_search}

    def is_terminal(self, node: str) -> bool:
        return node in self.terminal_nodes

    def digest(self) -> str:
        blob = json.dumps(graph_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# -- distributions ------------------------------------------------------------


def _local_weights(edges: tuple[EdgeSpec, ...]) -> list[float]:
    if edges and all(e.probability is None for e in edges):
        return [1.0 / len(edges)] * len(edges)
    return [e.probability if e.probability is not None else 0.0 for e in edges]


def outgoing_distribution(graph: TransitionGraph, node: str) -> list[tuple[EdgeSpec, float]]:
    """Mixed local+global distribution at ``node``.

    Globals keep their absolute mass; local weights are scaled by the mass
    the globals leave over.  Order is locals then globals, each in
    declaration order.
    """
    if node not in graph.nodes:
        raise KeyError(node)
    if graph.is_terminal(node):
        raise TerminalNode(f"node {node!r} is terminal")
    locals_ = graph.local_edges.get(node, ())
    global_mass = math.fsum(g.probability or 0.0 for g in graph.global_edges)
    if graph.global_edges and locals_ and global_mass >= 1.0:
        raise GlobalMassExceedsOne(
            f"global edges carry mass {global_mass:.6g} >= 1 at node {node!r}"
        )
    scale = 1.0 - global_mass if locals_ else 1.0
    dist = [(e, w * scale) for e, w in zip(locals_, _local_weights(locals_))]
    dist.extend((g, g.probability or 0.0) for g in graph.global_edges)
    return dist


def successor(edge: EdgeSpec, node: str) -> str:
    """Walk position after taking ``edge`` at ``node``."""
    return node if edge.resumes else edge.to


# -- validation -----------------------------------------------------------------


def _walk_successors(graph: TransitionGraph, node: str) -> set[str]:
    if graph.is_terminal(node):
        return set()
    nxt = {e.to for e in graph.local_edges.get(node, ()) if e.to in graph.nodes}
    nxt |= {g.to for g in graph.global_edges if not g.resumes and g.to in graph.nodes}
    return nxt


def validate(graph: TransitionGraph, prompts: Any = None) -> ValidationReport:
    """Check every structural invariant of ``graph``.

    ``prompts`` is an optional registry (anything supporting ``in``); when
    given, prompt ids on nodes and edges must resolve against it.
    """
    report = ValidationReport()
    err = lambda code, loc, msg: report.errors.append(ValidationIssue(code, loc, msg))  # noqa: E731
    warn = lambda code, loc, msg: report.warnings.append(ValidationIssue(code, loc, msg))  # noqa: E731

    if graph.start_node not in graph.nodes:
        err("UNKNOWN_NODE", "start", f"start node {graph.start_node!r} is not defined")
    for t in sorted(graph.terminal_nodes):
        if t not in graph.nodes:
            err("UNKNOWN_NODE", f"terminals/{t}", f"terminal {t!r} is not defined")
    if not graph.terminal_nodes:
        err("NO_TERMINAL", "terminals", "graph declares no terminal node")

    for idx, e in enumerate(graph.edges):
        loc = f"edges[{idx}]({e.source}->{e.to}:{e.intent})"
        for end in (e.source, e.to):
            if end not in graph.nodes:
                err("UNKNOWN_NODE", loc, f"edge endpoint {end!r} is not defined")
        if e.return_semantics is not None:
            err("BAD_RETURN", loc, "only global edges may declare return semantics")
        if e.source in graph.terminal_nodes:
            warn("TERMINAL_OUT", loc, f"edge leaves terminal node {e.source!r} and is never taken")
    for idx, g in enumerate(graph.global_edges):
        loc = f"global_edges[{idx}]({g.intent})"
        if g.to not in graph.nodes:
            err("UNKNOWN_NODE", loc, f"edge endpoint {g.to!r} is not defined")
        if g.return_semantics not in RETURN_MODES:
            err("BAD_RETURN", loc, f"return must be one of {RETURN_MODES}")
        if g.probability is None:
            err("PROB_MISSING", loc, "global edges need an explicit probability")
        if g.resumes and g.to in graph.terminal_nodes:
            err("BAD_RETURN", loc, "a resume edge cannot target a terminal node")

    for e in (*graph.edges, *graph.global_edges):
        loc = f"edge({e.source or '*'}:{e.intent})"
        if e.probability is not None and not (0.0 < e.probability <= 1.0):
            err("PROB_RANGE", loc, f"probability {e.probability} outside (0, 1]")
        names = [s.name for s in e.slot_schema]
        for dup in sorted({n for n in names if names.count(n) > 1}):
            err("DUP_SLOT", loc, f"slot {dup!r} declared more than once")
        for s in e.slot_schema:
            if s.source == "query-variable" and not e.is_search:
                warn("QUERY_SLOT", loc, f"slot {s.name!r} reads the query on a non-search edge")
        if e.is_select and not any(s.source == "list-index" for s in e.slot_schema):
            warn("SELECT_SLOT", loc, "select edge has no list-index slot to record the choice")
        if e.k is not None and e.k < 1:
            err("BAD_K", loc, "k must be a positive integer")
        if prompts is not None and e.user_prompt_id not in prompts:
            err("UNKNOWN_PROMPT", loc, f"user prompt {e.user_prompt_id!r} is not registered")
    if prompts is not None:
        for n in graph.nodes.values():
            if n.system_prompt_id not in prompts:
                err("UNKNOWN_PROMPT", f"nodes/{n.id}", f"system prompt {n.system_prompt_id!r} is not registered")

    global_mass = math.fsum(g.probability or 0.0 for g in graph.global_edges)
    if graph.global_edges and global_mass >= 1.0:
        err("GLOBAL_MASS", "global_edges", f"global probabilities sum to {global_mass:.6g} >= 1")

    walk_nodes = [n for n in graph.nodes if n not in graph.detour_nodes]
    global_intents = [g.intent for g in graph.global_edges]
    for node in walk_nodes:
        if graph.is_terminal(node):
            continue
        locals_ = graph.local_edges.get(node, ())
        intents = [e.intent for e in locals_] + global_intents
        for dup in sorted({i for i in intents if intents.count(i) > 1}):
            err("DUP_INTENT", f"nodes/{node}", f"intent {dup!r} leaves this node more than once")
        declared = [e.probability for e in locals_]
        if any(p is None for p in declared) and any(p is not None for p in declared):
            err("PROB_MIXED", f"nodes/{node}", "some outgoing edges declare p and others omit it")
            continue
        if not locals_:
            total = global_mass
        elif all(p is None for p in declared):
            total = 1.0
        else:
            total = math.fsum(declared) * (1.0 - global_mass) + global_mass
            local_sum = math.fsum(declared)
            if abs(local_sum - 1.0) > PROB_TOL:
                err("PROB_SUM", f"nodes/{node}", f"outgoing probabilities sum to {local_sum:.6g}, not 1")
                continue
        if abs(total - 1.0) > PROB_TOL:
            err("PROB_SUM", f"nodes/{node}", f"outgoing distribution sums to {total:.6g}, not 1")

    for n in graph.nodes.values():
        for eff in n.state_effects:
            if eff.op not in EFFECT_OPS:
                err("BAD_EFFECT", f"nodes/{n.id}", f"unknown effect op {eff.op!r}")
            if eff.item is not None and eff.item not in EFFECT_ITEMS and not eff.item.startswith("slot:"):
                err("BAD_EFFECT", f"nodes/{n.id}", f"unknown effect item {eff.item!r}")
            if eff.pool is not None and eff.pool not in EXTRA_POOLS:
                err("BAD_EFFECT", f"nodes/{n.id}", f"unknown extra pool {eff.pool!r}")

    if graph.start_node in graph.nodes:
        reachable = {graph.start_node}
        queue = deque([graph.start_node])
        while queue:
            for nxt in _walk_successors(graph, queue.popleft()):
                if nxt not in reachable:
                    reachable.add(nxt)
                    queue.append(nxt)
        for node in walk_nodes:
            if node not in reachable:
                err("UNREACHABLE", f"nodes/{node}", f"node {node!r} is not reachable from {graph.start_node!r}")
        # reverse search from terminals over walk transitions
        preds: dict[str, set[str]] = {n: set() for n in graph.nodes}
        for node in reachable:
            for nxt in _walk_successors(graph, node):
                preds[nxt].add(node)
        can_finish = {t for t in graph.terminal_nodes if t in graph.nodes}
        queue = deque(can_finish)
        while queue:
            for p in preds[queue.popleft()]:
                if p not in can_finish:
                    can_finish.add(p)
                    queue.append(p)
        for node in sorted(reachable - can_finish):
            err("NO_TERMINAL_PATH", f"nodes/{node}", f"no terminal node is reachable from {node!r}")
    return report


# -- (de)serialization -----------------------------------------------------------


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in obj:
        raise SchemaError(f"missing required field {key!r}", where)
    return obj[key]


def _typed(value: Any, kind: type | tuple[type, ...], where: str, key: str) -> Any:
    if isinstance(value, bool) and kind in (int, float, (int, float)):
        raise ParseError(f"expected {getattr(kind, '__name__', 'number')}, got bool", field=f"{where}.{key}")
    if not isinstance(value, kind):
        raise ParseError(f"expected {getattr(kind, '__name__', kind)} for {key!r}", field=f"{where}.{key}")
    return value


def _slot_from_dict(raw: Mapping[str, Any], where: str) -> SlotSpec:
    if not isinstance(raw, Mapping):
        raise ParseError("slot must be an object", field=where)
    name = _typed(_require(raw, "name", where), str, where, "name")
    source = _typed(_require(raw, "source", where), str, where, "source")
    if source not in SLOT_SOURCES:
        raise SchemaError(f"slot source must be one of {SLOT_SOURCES}, got {source!r}", where)
    values = raw.get("values")
    rng = raw.get("range")
    if source == "document-field" and "field" not in raw:
        raise SchemaError("document-field slot needs 'field'", where)
    if source == "literal-generator" and values is None and rng is None:
        raise SchemaError("literal-generator slot needs 'values' or 'range'", where)
    if rng is not None and (not isinstance(rng, list) or len(rng) != 2 or rng[0] > rng[1]):
        raise ParseError("range must be [lo, hi] with lo <= hi", field=f"{where}.range")
    return SlotSpec(
        name=name,
        source=source,
        field=raw.get("field"),
        list=raw.get("list", "results" if source == "list-index" else None),
        values=tuple(str(v) for v in values) if values is not None else None,
        range=(int(rng[0]), int(rng[1])) if rng is not None else None,
    )


def _effect_from_dict(raw: Mapping[str, Any], where: str) -> StateEffect:
    if not isinstance(raw, Mapping):
        raise ParseError("effect must be an object", field=where)
    op = _typed(_require(raw, "op", where), str, where, "op")
    if op not in EFFECT_OPS:
        raise SchemaError(f"effect op must be one of {EFFECT_OPS}, got {op!r}", where)
    if op in ("increment", "set", "reset"):
        _require(raw, "counter", where)
    else:
        _require(raw, "list", where)
    if op in ("append", "remove"):
        _require(raw, "item", where)
    if op == "set":
        _require(raw, "from_slot", where)
    return StateEffect(
        op=op,
        counter=raw.get("counter"),
        list=raw.get("list"),
        by=int(raw.get("by", 1)),
        from_slot=raw.get("from_slot"),
        item=raw.get("item"),
        pool=raw.get("pool"),
    )


def _edge_from_dict(raw: Mapping[str, Any], where: str, is_global: bool) -> EdgeSpec:
    if not isinstance(raw, Mapping):
        raise ParseError("edge must be an object", field=where)
    source = None if is_global else _typed(_require(raw, "from", where), str, where, "from")
    p = raw.get("p")
    if p is not None:
        p = float(_typed(p, (int, float), where, "p"))
    query_type = raw.get("query_type", "specific")
    if query_type not in QUERY_TYPES:
        raise SchemaError(f"query_type must be one of {QUERY_TYPES}", where)
    ret = raw.get("return")
    if is_global:
        ret = _require(raw, "return", where)
    k = raw.get("k")
    return EdgeSpec(
        source=source,
        to=_typed(_require(raw, "to", where), str, where, "to"),
        intent=_typed(_require(raw, "intent", where), str, where, "intent"),
        probability=p,
        user_prompt_id=_typed(_require(raw, "user_prompt", where), str, where, "user_prompt"),
        slot_schema=tuple(
            _slot_from_dict(s, f"{where}.slots[{i}]")
            for i, s in enumerate(_typed(raw.get("slots", []), list, where, "slots"))
        ),
        is_search=bool(_typed(raw.get("search", False), bool, where, "search")),
        return_semantics=ret,
        query_type=query_type,
        is_select=bool(_typed(raw.get("select", False), bool, where, "select")),
        k=int(_typed(k, int, where, "k")) if k is not None else None,
    )


def graph_from_dict(raw: Mapping[str, Any]) -> TransitionGraph:
    """Build a graph from the parsed JSON document.

    Structural problems (missing fields, references to undefined nodes) raise
    :class:`SchemaError`; semantic checks are left to :func:`validate`.
    """
    if not isinstance(raw, Mapping):
        raise ParseError("graph document must be a JSON object")
    nodes: dict[str, NodeSpec] = {}
    for i, n in enumerate(_typed(_require(raw, "nodes", "graph"), list, "graph", "nodes")):
        where = f"nodes[{i}]"
        if not isinstance(n, Mapping):
            raise ParseError("node must be an object", field=where)
        node_id = _typed(_require(n, "id", where), str, where, "id")
        if node_id in nodes:
            raise SchemaError(f"duplicate node id {node_id!r}", where)
        nodes[node_id] = NodeSpec(
            id=node_id,
            system_prompt_id=_typed(_require(n, "system_prompt", where), str, where, "system_prompt"),
            state_effects=tuple(
                _effect_from_dict(e, f"{where}.effects[{j}]")
                for j, e in enumerate(_typed(n.get("effects", []), list, where, "effects"))
            ),
            expose=tuple(_typed(n.get("expose", []), list, where, "expose")),
        )
    edges = tuple(
        _edge_from_dict(e, f"edges[{i}]", False)
        for i, e in enumerate(_typed(_require(raw, "edges", "graph"), list, "graph", "edges"))
    )
    global_edges = tuple(
        _edge_from_dict(e, f"global_edges[{i}]", True)
        for i, e in enumerate(_typed(raw.get("global_edges", []), list, "graph", "global_edges"))
    )
    start = _typed(_require(raw, "start", "graph"), str, "graph", "start")
    terminals = _typed(_require(raw, "terminals", "graph"), list, "graph", "terminals")

    if start not in nodes:
        raise SchemaError(f"start node {start!r} is not defined", "start")
    for t in terminals:
        if t not in nodes:
            raise SchemaError(f"terminal node {t!r} is not defined", "terminals")
    for i, e in enumerate(edges):
        for end in (e.source, e.to):
            if end not in nodes:
                raise SchemaError(f"unknown node {end!r}", f"edges[{i}]")
    for i, g in enumerate(global_edges):
        if g.to not in nodes:
            raise SchemaError(f"unknown node {g.to!r}", f"global_edges[{i}]")

    return TransitionGraph(
        nodes=nodes,
        edges=edges,
        global_edges=global_edges,
        start_node=start,
        terminal_nodes=frozenset(terminals),
    )


def load_graph(path: str | Path) -> TransitionGraph:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed graph file: {exc.msg}", line=exc.lineno) from exc
    return graph_from_dict(raw)


def _slot_to_dict(s: SlotSpec) -> dict[str, Any]:
    out: dict[str, Any] = {"name": s.name, "source": s.source}
    if s.field is not None:
        out["field"] = s.field
    if s.source == "list-index":
        out["list"] = s.list
    if s.values is not None:
        out["values"] = list(s.values)
    if s.range is not None:
        out["range"] = list(s.range)
    return out


def _effect_to_dict(e: StateEffect) -> dict[str, Any]:
    out: dict[str, Any] = {"op": e.op}
    for key in ("counter", "list", "from_slot", "item", "pool"):
        val = getattr(e, key)
        if val is not None:
            out[key] = val
    if e.by != 1:
        out["by"] = e.by
    return out


def _edge_to_dict(e: EdgeSpec) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if e.source is not None:
        out["from"] = e.source
    out.update(to=e.to, intent=e.intent, user_prompt=e.user_prompt_id)
    if e.probability is not None:
        out["p"] = e.probability
    if e.slot_schema:
        out["slots"] = [_slot_to_dict(s) for s in e.slot_schema]
    if e.is_search:
        out["search"] = True
    if e.query_type != "specific":
        out["query_type"] = e.query_type
    if e.is_select:
        out["select"] = True
    if e.k is not None:
        out["k"] = e.k
    if e.return_semantics is not None:
        out["return"] = e.return_semantics
    return out


def graph_to_dict(graph: TransitionGraph) -> dict[str, Any]:
    nodes = []
    for n in graph.nodes.values():
        row: dict[str, Any] = {"id": n.id, "system_prompt": n.system_prompt_id}
        if n.state_effects:
            row["effects"] = [_effect_to_dict(e) for e in n.state_effects]
        if n.expose:
            row["expose"] = list(n.expose)
        nodes.append(row)
    return {
        "nodes": nodes,
        "edges": [_edge_to_dict(e) for e in graph.edges],
        "global_edges": [_edge_to_dict(g) for g in graph.global_edges],
        "start": graph.start_node,
        "terminals": sorted(graph.terminal_nodes),
    }


def serialize_graph(graph: TransitionGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=2, ensure_ascii=False) + "\n"


def save_graph(graph: TransitionGraph, path: str | Path) -> None:
    Path(path).write_text(serialize_graph(graph), encoding="utf-8")


def bundled_graph_path(name: str) -> Path:
    """Path of a graph shipped with the package (``recipe`` or ``ecommerce``)."""
    return Path(__file__).parent / "data" / "graphs" / f"{name}.json"


def iter_edges(graph: TransitionGraph) -> Iterable[EdgeSpec]:
    yield from graph.edges
    yield from graph.global_edges
