import time
from collections import Counter

import pytest
from scipy.stats import chisquare

from conftest import make_graph
from todsynth.errors import EmptyInput, InvalidGraph
from todsynth.sampler import (
    derive_seed,
    intent_frequencies,
    read_walks,
    replay_errors,
    sample_walk,
    sample_walks,
    splitmix64,
    write_walks,
)


@pytest.fixture
def three_way():
    return make_graph(["a", "z"], [
        {"from": "a", "to": "z", "intent": "x"},
        {"from": "a", "to": "z", "intent": "y"},
        {"from": "a", "to": "z", "intent": "w"},
    ])


def test_splitmix_reference_values():
    # published first outputs of splitmix64 seeded with 0, stepped by the golden gamma
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_derived_seeds_differ_per_index():
    seeds = {derive_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000


def test_uniform_branch_frequencies(three_way):
    t = time.perf_counter()
    walks = sample_walks(three_way, 10_000, master_seed=2024)
    elapsed = time.perf_counter() - t
    counts = Counter(w.intents[0] for w in walks)
    for intent in "xyw":
        assert abs(counts[intent] / 10_000 - 1 / 3) <= 0.02
    assert chisquare([counts[i] for i in "xyw"]).pvalue > 0.01
    assert elapsed < 2.0


def test_walk_shape(recipe_graph):
    w = sample_walk(recipe_graph, 5)
    assert w.steps[0].node == recipe_graph.start_node
    if not w.truncated:
        assert w.steps[-1].edge is None and recipe_graph.is_terminal(w.steps[-1].node)
    assert all(s.edge is not None for s in w.steps[:-1])
    assert replay_errors(recipe_graph, w) == []


def test_truncation_is_exactly_max_len():
    g = make_graph(["a", "b", "z"], [
        {"from": "a", "to": "b", "intent": "x", "p": 1.0},
        {"from": "b", "to": "b", "intent": "loop", "p": 0.999},
        {"from": "b", "to": "z", "intent": "out", "p": 0.001},
    ])
    w = sample_walk(g, 1, max_len=10)
    assert w.truncated and len(w.exchanges) == 10 and len(w.steps) == 10


def test_same_seed_same_walk(recipe_graph):
    assert sample_walk(recipe_graph, 99) == sample_walk(recipe_graph, 99)


def test_worker_count_does_not_change_walks(recipe_graph):
    assert sample_walks(recipe_graph, 200, 3, workers=1) == sample_walks(recipe_graph, 200, 3, workers=4)


def test_invalid_graph_is_refused():
    g = make_graph(["a", "z"], [{"from": "a", "to": "z", "intent": "x", "p": 0.5}])
    with pytest.raises(InvalidGraph):
        sample_walk(g, 0)


def test_thousand_seeds_on_bundled_graphs(recipe_graph, shop_graph):
    for g in (recipe_graph, shop_graph):
        for seed in range(1000):
            w = sample_walk(g, seed, check=False)
            assert len(w.exchanges) <= 60


def test_resume_detour_goes_back(recipe_graph):
    for seed in range(300):
        w = sample_walk(recipe_graph, seed)
        for a, b in zip(w.steps, w.steps[1:]):
            if a.edge.resumes:
                assert b.node == a.node


def test_intent_frequencies_normalized(recipe_graph):
    freqs = intent_frequencies(sample_walks(recipe_graph, 50, 0))
    assert sum(freqs.values()) == pytest.approx(1.0)
    with pytest.raises(EmptyInput):
        intent_frequencies([])


def test_walks_roundtrip_through_jsonl(tmp_path, recipe_graph):
    walks = sample_walks(recipe_graph, 20, 11)
    write_walks(walks, tmp_path / "w.jsonl")
    assert read_walks(recipe_graph, tmp_path / "w.jsonl") == walks


def test_replay_catches_illegal_edge(recipe_graph):
    w = sample_walk(recipe_graph, 1)
    bad_edge = next(e for e in recipe_graph.edges if e.intent == "finish_task")
    from dataclasses import replace

    from todsynth.sampler import WalkStep
    tampered = replace(w, steps=(WalkStep(w.steps[0].node, bad_edge),) + w.steps[1:])
    assert replay_errors(recipe_graph, tampered)
