import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from todsynth.graph import bundled_graph_path, graph_from_dict, load_graph  # noqa: E402
from todsynth.llm.backend import MockBackend  # noqa: E402
from todsynth.llm.prompts import load_prompts  # noqa: E402
from todsynth.retrieval import build_index, bundled_corpus_path, ingest  # noqa: E402


@pytest.fixture(scope="session")
def recipe_graph():
    return load_graph(bundled_graph_path("recipe"))


@pytest.fixture(scope="session")
def shop_graph():
    return load_graph(bundled_graph_path("ecommerce"))


@pytest.fixture(scope="session")
def prompts():
    return load_prompts()


@pytest.fixture(scope="session")
def recipe_index():
    return build_index(ingest(bundled_corpus_path("recipes")))


@pytest.fixture(scope="session")
def product_index():
    return build_index(ingest(bundled_corpus_path("products")))


@pytest.fixture
def mock():
    return MockBackend()


def make_graph(nodes, edges, start="a", terminals=("z",), global_edges=()):
    """Tiny graph builder; nodes is a list of ids, prompts are named after them."""
    raw = {
        "nodes": [{"id": n, "system_prompt": f"sys_{n}"} for n in nodes],
        "edges": [dict(e) for e in edges],
        "global_edges": [dict(g) for g in global_edges],
        "start": start,
        "terminals": list(terminals),
    }
    for e in raw["edges"] + raw["global_edges"]:
        e.setdefault("user_prompt", f"user_{e['intent']}")
    return graph_from_dict(raw)


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


def walk_of(graph, intents, walk_id=0, seed=0):
    """Walk that follows ``intents`` from the start node (globals included)."""
    from todsynth.graph import outgoing_distribution, successor
    from todsynth.sampler import RandomWalk, WalkStep

    node = graph.start_node
    steps = []
    for intent in intents:
        edge = next(e for e, _ in outgoing_distribution(graph, node) if e.intent == intent)
        steps.append(WalkStep(node, edge))
        node = successor(edge, node)
    done = graph.is_terminal(node)
    if done:
        steps.append(WalkStep(node, None))
    return RandomWalk(walk_id, seed, tuple(steps), truncated=not done)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
