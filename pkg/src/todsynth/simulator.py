"""Turn-by-turn conversation simulation along a sampled walk.

For each exchange ``(node, edge)`` of a walk the simulator asks the backend
for a system reply (node prompt) and a user utterance (edge prompt).  The
graph fixes intents and slot values; the LLM only verbalizes them.  Search
edges generate a query against the target document, retrieve with the
target forced into the result set, and emit ``suggestions``/``retriever``
turns; select edges point at the target's position in the shown results.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from todsynth.dialogue import DialogueTurn, StateVariables, SystemState, TrainingExample, canonical_json
from todsynth.errors import BackendError, EmptyGeneration, PromptError, TargetNotInCorpus
from todsynth.graph import EdgeSpec, NodeSpec, SlotSpec, StateEffect, TransitionGraph
from todsynth.llm.backend import Backend, CompletionRequest
from todsynth.llm.prompts import PromptRegistry, PromptTemplate, render
from todsynth.retrieval import DEFAULT_K, SearchIndex, SeedDocument, retrieve_with_target
from todsynth.sampler import RandomWalk

log = logging.getLogger(__name__)

HISTORY_TURNS = 6
DESCRIPTION_TOKENS = 40
QUERY_ATTEMPTS = 3
QUERY_TYPES = ("specific", "generic")


@dataclass
class SimulationSettings:
    k: int = DEFAULT_K
    n_suggestions: int = 3
    temperature: float = 0.7
    max_tokens: int = 512
    history_turns: int = HISTORY_TURNS
    query_prompt_prefix: str = "query_"
    suggestions_prompt: str = "suggest_queries"


def _ask(backend: Backend, prompt: str, settings: SimulationSettings) -> str:
    req = CompletionRequest.from_prompt(
        prompt,
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
        model_id=getattr(backend, "model_id", "mock"),
    )
    return backend.complete(req).strip()


def _clean_query(text: str) -> str:
    line = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
    line = re.sub(r"^(query|search query)\s*:\s*", "", line, flags=re.IGNORECASE)
    return line.strip().strip("\"'`").strip()


def generate_query(backend: Backend, query_prompt: PromptTemplate, target: SeedDocument,
                   query_type: str, settings: SimulationSettings | None = None) -> str:
    """Ask the backend for a search query that should lead to ``target``.

    Specific queries may see the title; generic ones only see metadata, with
    any verbatim occurrence of the title scrubbed.  Three empty replies in a
    row fall back to the title itself.
    """
    settings = settings or SimulationSettings()
    if query_type not in QUERY_TYPES:
        raise ValueError(f"query_type must be one of {QUERY_TYPES}")
    allowed = {"title", "query_type", *target.metadata}
    unknown = sorted(query_prompt.required_vars - allowed)
    if unknown:
        raise PromptError(f"query prompt {query_prompt.id!r} uses unsupported variables {unknown}")
    if query_type == "generic" and "title" in query_prompt.required_vars:
        raise PromptError(f"generic query prompt {query_prompt.id!r} must not bind the title")

    title_re = re.compile(re.escape(target.title), re.IGNORECASE)
    bindings: dict[str, str] = {"query_type": query_type}
    for key in query_prompt.required_vars - {"title", "query_type"}:
        value = target.metadata.get(key, "")
        bindings[key] = title_re.sub("", value) if query_type == "generic" else value
    if query_type == "specific":
        bindings["title"] = target.title
    prompt = render(query_prompt, {k: bindings[k] for k in query_prompt.required_vars})

    for _ in range(QUERY_ATTEMPTS):
        query = _clean_query(_ask(backend, prompt, settings))
        if query:
            return query
    log.info("%s", EmptyGeneration(f"empty query for {target.doc_id}; using the title"))
    return target.title


def _parse_suggestions(text: str, n: int) -> list[str]:
    try:
        parsed = json.loads(text)
    except json.JSONDecodeError:
        parsed = None
    if isinstance(parsed, list):
        items = [str(x).strip() for x in parsed]
    else:
        items = [_clean_query(ln) for ln in text.splitlines()]
    out = list(dict.fromkeys(q for q in items if q))
    return out[:n]


def _describe(doc: SeedDocument) -> dict:
    words = doc.body.split()
    desc = " ".join(words[:DESCRIPTION_TOKENS])
    return {
        "doc_id": doc.doc_id,
        "title": doc.title,
        "description": desc,
        "rating": doc.metadata.get("rating"),
    }


def _render_documents(docs: Sequence[SeedDocument]) -> str:
    if not docs:
        return "(none)"
    lines = []
    for i, d in enumerate(docs, 1):
        info = _describe(d)
        rating = f" (rating {info['rating']})" if info["rating"] else ""
        lines.append(f"{i}. {d.title}{rating}: {info['description']}")
    return "\n".join(lines)


def _recipe_step(doc: SeedDocument, number: int) -> str:
    steps = [ln.strip() for ln in doc.body.splitlines() if re.match(r"^\s*\d+[.)]", ln)]
    if 1 <= number <= len(steps):
        return steps[number - 1]
    return ""


class ConversationSimulator:
    """Runs one walk to a :class:`TrainingExample`.

    A fresh instance is used per conversation; it owns all mutable state.
    """

    def __init__(self, graph: TransitionGraph, index: SearchIndex, backend: Backend,
                 prompts: PromptRegistry, target: SeedDocument, seed: int,
                 settings: SimulationSettings | None = None):
        if target.doc_id not in index.corpus:
            raise TargetNotInCorpus(target.doc_id)
        self.graph = graph
        self.index = index
        self.backend = backend
        self.prompts = prompts
        self.target = target
        self.settings = settings or SimulationSettings()
        self.rng = random.Random(seed)
        self.vars = StateVariables()
        self.turns: list[DialogueTurn] = []
        self.results: list[SeedDocument] = []  # last list shown in a retriever turn
        self.pending_suggestions: list[str] | None = None
        self._names = self._variable_names(graph)

    @staticmethod
    def _variable_names(graph: TransitionGraph) -> tuple[set[str], set[str]]:
        counters, lists = set(), set()
        for node in graph.nodes.values():
            for eff in node.state_effects:
                if eff.counter:
                    counters.add(eff.counter)
                if eff.list:
                    lists.add(eff.list)
        for e in (*graph.edges, *graph.global_edges):
            for s in e.slot_schema:
                if s.source == "list-index" and s.list and s.list != "results":
                    lists.add(s.list)
        return counters, lists

    # -- bindings ---------------------------------------------------------------

    def _history(self) -> str:
        tail = self.turns[-self.settings.history_turns:]
        return "\n".join(f"{t.role}: {t.text}" for t in tail) or "(conversation start)"

    def _list_titles(self, name: str) -> str:
        ids = self.vars.lists.get(name, [])
        titles = [self.index.corpus.get(i).title for i in ids]
        return "; ".join(titles) if titles else "(empty)"

    def _bindings(self, node: NodeSpec, docs: Sequence[SeedDocument], **extra: str) -> dict[str, str]:
        counters, lists = self._names
        b = {
            "history": self._history(),
            "state": canonical_json(self.vars.snapshot()),
            "documents": _render_documents(docs),
            "node": node.id,
            "query": self.vars.query or "",
            "target_title": self.target.title,
            "target_body": self.target.body,
            "target_metadata": canonical_json(dict(self.target.metadata)),
            "current_step": _recipe_step(self.target, self.vars.counter("step")),
        }
        for c in counters:
            b[c] = str(self.vars.counter(c))
        for name in lists:
            b[name] = self._list_titles(name)
        b.update(extra)
        return b

    def _render(self, template_id: str, bindings: Mapping[str, str]) -> str:
        template = self.prompts[template_id]
        missing = template.required_vars - bindings.keys()
        if missing:
            raise PromptError(f"template {template_id!r} needs unknown variables {sorted(missing)}")
        return render(template, {k: bindings[k] for k in template.required_vars})

    # -- slots and effects ------------------------------------------------------

    def _fill_slot(self, slot: SlotSpec) -> str | None:
        if slot.source == "query-variable":
            return self.vars.query
        if slot.source == "document-field":
            return self.target.field_value(slot.field or "title") or None
        if slot.source == "list-index":
            if slot.list in (None, "results"):
                ids = [d.doc_id for d in self.results]
                if self.target.doc_id in ids:
                    return str(ids.index(self.target.doc_id) + 1)
                return None
            items = self.vars.lists.get(slot.list, [])
            if not items:
                return None
            return str(self.rng.randrange(len(items)) + 1)
        if slot.values:
            return self.rng.choice(slot.values)
        if slot.range:
            return str(self.rng.randint(*slot.range))
        return None

    def _fill_slots(self, edge: EdgeSpec) -> dict[str, str]:
        out = {}
        for slot in edge.slot_schema:
            value = self._fill_slot(slot)
            if value is not None and value != "":
                out[slot.name] = value
        return out

    def _pick_extra(self, current: list[str], pool: str | None) -> str | None:
        taken = set(current) | {self.target.doc_id}
        docs = [d for d in self.index.corpus.documents if d.doc_id not in taken]
        if pool == "same_category":
            cat = self.target.metadata.get("category")
            same = [d for d in docs if d.metadata.get("category") == cat]
            docs = same or docs
        if not docs:
            return None
        return self.rng.choice(docs).doc_id

    def _effect_item(self, eff: StateEffect, slots: Mapping[str, str], via: EdgeSpec | None,
                     lst: list[str]) -> str | None:
        item = eff.item or ""
        if item == "extra":
            return self._pick_extra(lst, eff.pool)
        if item == "target":
            return self.target.doc_id
        if item == "target_or_extra":
            if self.target.doc_id not in lst:
                return self.target.doc_id
            return self._pick_extra(lst, eff.pool)
        if item == "last":
            return lst[-1] if lst else None
        if item == "random":
            return self.rng.choice(lst) if lst else None
        if item.startswith("slot:"):
            # the slot holds a 1-based position in whatever list it indexed
            raw = slots.get(item[5:])
            if raw is None or not raw.isdigit():
                return None
            return self._at(self._slot_list(via, item[5:]), int(raw))
        raise ValueError(f"unknown effect item {item!r}")

    def _apply_effect(self, eff: StateEffect, slots: Mapping[str, str], via: EdgeSpec | None) -> None:
        v = self.vars
        if eff.op == "increment":
            v.counters[eff.counter] = v.counter(eff.counter) + eff.by
        elif eff.op == "reset":
            v.counters[eff.counter] = 0
        elif eff.op == "set":
            raw = slots.get(eff.from_slot or "")
            if raw is not None and raw.lstrip("-").isdigit():
                v.counters[eff.counter] = max(0, int(raw))
        elif eff.op == "clear":
            v.lists[eff.list] = []
        elif eff.op == "append":
            lst = v.items(eff.list)
            # extras come in a batch of 1..by items
            times = self.rng.randint(1, max(1, eff.by)) if eff.item == "extra" else 1
            for _ in range(times):
                doc_id = self._effect_item(eff, slots, via, lst)
                if doc_id is not None and doc_id not in lst:
                    lst.append(doc_id)
        elif eff.op == "remove":
            lst = v.items(eff.list)
            doc_id = self._effect_item(eff, slots, via, lst)
            if doc_id is not None and doc_id in lst:
                lst.remove(doc_id)

    def _slot_list(self, edge: EdgeSpec | None, slot_name: str) -> list[str]:
        schema = next((s for s in (edge.slot_schema if edge else ()) if s.name == slot_name), None)
        if schema is None or schema.list in (None, "results"):
            return [d.doc_id for d in self.results]
        return self.vars.lists.get(schema.list, [])

    @staticmethod
    def _at(items: Sequence[str], position: int) -> str | None:
        return items[position - 1] if 1 <= position <= len(items) else None

    def _enter(self, node: NodeSpec, slots: Mapping[str, str], via: EdgeSpec | None) -> None:
        for eff in node.state_effects:
            self._apply_effect(eff, slots, via)

    def _exposed(self, node: NodeSpec) -> dict[str, str]:
        out = {}
        for name in node.expose:
            if name == "query":
                if self.vars.query:
                    out["query"] = self.vars.query
            elif name in self.vars.lists or name in self._names[1]:
                out[name] = canonical_json(self.vars.lists.get(name, []))
            elif name in self.vars.scalars:
                out[name] = self.vars.scalars[name]
            else:
                out[name] = str(self.vars.counter(name))
        return out

    # -- main loop --------------------------------------------------------------

    def _search(self, edge: EdgeSpec) -> list[SeedDocument]:
        qtype = edge.query_type
        template = self.prompts[f"{self.settings.query_prompt_prefix}{qtype}"]
        self.vars.query = generate_query(self.backend, template, self.target, qtype, self.settings)
        k = edge.k or self.settings.k
        queries = [self.vars.query]
        if qtype == "generic":
            prompt = self._render(self.settings.suggestions_prompt, {
                "query": self.vars.query,
                "n": str(self.settings.n_suggestions),
                "category": self.target.metadata.get("category", ""),
            })
            suggestions = _parse_suggestions(_ask(self.backend, prompt, self.settings),
                                             self.settings.n_suggestions) or [self.vars.query]
            self.pending_suggestions = suggestions
            queries = suggestions
        return retrieve_with_target(self.index, queries[0], k, self.target, extra_queries=queries[1:])

    def run(self, walk: RandomWalk, example_id: str) -> TrainingExample:
        graph = self.graph
        settings = self.settings
        self._enter(graph.nodes[graph.start_node], {}, None)
        states: list[SystemState] = []
        docs: list[SeedDocument] = []
        retrieved: list[SeedDocument] = []
        prev: EdgeSpec | None = None
        exchanges = walk.exchanges

        if not exchanges:
            node = graph.nodes[walk.steps[0].node]
            text = _ask(self.backend, self._render(node.system_prompt_id, self._bindings(node, [])), settings)
            self.turns.append(DialogueTurn("system", text, SystemState(node.id, self._exposed(node))))

        for t, step in enumerate(exchanges):
            edge = step.edge
            assert edge is not None
            try:
                if prev is not None and prev.resumes:
                    pass  # detour reply: V and D stay frozen
                elif prev is not None and prev.is_search:
                    docs = retrieved
                else:
                    docs = []
                sys_node = graph.nodes[prev.to] if prev is not None and prev.resumes else graph.nodes[step.node]
                prompt = self._render(sys_node.system_prompt_id, self._bindings(sys_node, docs))
                reply = _ask(self.backend, prompt, settings)
                self.turns.append(DialogueTurn(
                    "system", reply,
                    SystemState(sys_node.id, self._exposed(sys_node), tuple(d.doc_id for d in docs)),
                ))

                self.pending_suggestions = None
                if edge.is_search:
                    retrieved = self._search(edge)
                slots = self._fill_slots(edge)
                selected = None
                if edge.is_select:
                    selected = self.target
                user_bindings = self._bindings(
                    graph.nodes[step.node], docs,
                    intent=edge.intent,
                    slots=canonical_json(slots),
                    selected_title=(selected or self.target).title,
                )
                utterance = _ask(self.backend, self._render(edge.user_prompt_id, user_bindings), settings)
                state_docs = retrieved if edge.is_search else docs
                state = SystemState(edge.intent, slots, tuple(d.doc_id for d in state_docs))
                self.turns.append(DialogueTurn("user", utterance, state))
                states.append(state)

                if edge.is_search:
                    if self.pending_suggestions is not None:
                        self.turns.append(DialogueTurn("suggestions", canonical_json(self.pending_suggestions)))
                    self.turns.append(DialogueTurn("retriever", canonical_json([_describe(d) for d in retrieved])))
                    self.results = list(retrieved)
                if selected is not None:
                    self.turns.append(DialogueTurn("item_information", canonical_json(selected.to_dict())))

                if not edge.resumes:
                    self._enter(graph.nodes[edge.to], slots, edge)
            except BackendError as exc:
                err = type(exc)(f"turn {t}: {exc}")
                err.turn_index = t  # type: ignore[attr-defined]
                raise err from exc
            prev = edge

        return TrainingExample(
            example_id=example_id,
            walk_id=walk.walk_id,
            target_doc=self.target.doc_id,
            turns=tuple(self.turns),
            states=tuple(states),
        )


def simulate_conversation(graph: TransitionGraph, walk: RandomWalk, index: SearchIndex,
                          backend: Backend, prompts: PromptRegistry, target: SeedDocument,
                          seed: int, *, example_id: str | None = None,
                          settings: SimulationSettings | None = None) -> TrainingExample:
    sim = ConversationSimulator(graph, index, backend, prompts, target, seed, settings)
    return sim.run(walk, example_id or f"ex-{walk.walk_id:06d}")

