import filecmp
import json

import pytest

import todsynth.pipeline as pipeline
from todsynth.dataformat import parse, read_dataset
from todsynth.errors import BackendError, GenerationFailed, InvalidGraph
from todsynth.graph import load_graph
from todsynth.llm.backend import MockBackend
from todsynth.pipeline import GenerationConfig, run_generation


def config(tmp_path, name="out", **kw):
    base = {"graph": "recipe", "corpus": "recipes", "n": 20, "output_path": str(tmp_path / name), "workers": 1}
    base.update(kw)
    return GenerationConfig.from_dict(base)


@pytest.fixture
def fail_walk_7(monkeypatch):
    real = pipeline.simulate_conversation

    def sim(graph, walk, *a, **kw):
        if walk.walk_id == 7:
            err = BackendError("turn 3: upstream exploded")
            err.turn_index = 3
            raise err
        return real(graph, walk, *a, **kw)

    monkeypatch.setattr(pipeline, "simulate_conversation", sim)


def test_failure_is_isolated(tmp_path, fail_walk_7):
    result = run_generation(config(tmp_path, failure_threshold=0.1))
    assert result.report.generated == 19
    (failure,) = result.report.failures
    assert failure["walk_id"] == 7 and failure["turn_index"] == 3 and failure["error"] == "BackendError"
    ids = [ex.example_id for ex in result.examples]
    assert len(ids) == 19 and len(set(ids)) == 19
    report = json.loads((tmp_path / "out" / "train.report.json").read_text())
    assert report["failures"][0]["walk_id"] == 7


def test_failure_threshold(tmp_path, fail_walk_7):
    with pytest.raises(GenerationFailed) as info:
        run_generation(config(tmp_path, failure_threshold=0.01))
    assert info.value.report.failures[0]["walk_id"] == 7
    assert (tmp_path / "out" / "train.report.json").exists()


def test_byte_identical_across_runs_and_workers(tmp_path):
    run_generation(config(tmp_path, "a", n=30))
    run_generation(config(tmp_path, "b", n=30))
    run_generation(config(tmp_path, "c", n=30, workers=8))
    for other in ("b", "c"):
        for f in ("train.jsonl", "train.sidecar.jsonl", "manifest.json", "train.report.json"):
            assert filecmp.cmp(tmp_path / "a" / f, tmp_path / other / f, shallow=False), (other, f)


def test_every_intent_appears(tmp_path):
    result = run_generation(config(tmp_path, n=50), write=False)
    assert all(v > 0 for v in result.report.intent_counts.values())
    assert abs(sum(result.report.intent_frequencies.values()) - 1.0) < 1e-9


def test_ecommerce_run(tmp_path):
    result = run_generation(config(tmp_path, graph="ecommerce", corpus="products", n=30))
    assert result.report.generated == 30 and not result.report.failures
    assert len(read_dataset(tmp_path / "out" / "train.jsonl")) == 30


def test_targets_grounded(tmp_path):
    searches = load_graph(pipeline.resolve_graph("recipe")).search_intents
    assert searches
    result = run_generation(config(tmp_path, n=40), write=False)
    for ex in result.examples:
        for s in ex.states:
            if s.intent in searches:
                assert ex.target_doc in s.documents


def test_exported_rows_parse(tmp_path):
    run_generation(config(tmp_path, n=5))
    rows = [json.loads(x) for x in (tmp_path / "out" / "train.jsonl").read_text().splitlines()]
    assert [parse(r["text"]).example_id for r in rows] == [r["example_id"] for r in rows]


def test_invalid_graph_refused(tmp_path):
    bad = tmp_path / "g.json"
    g = json.loads(pipeline.resolve_graph("recipe").read_text())
    g["edges"][0]["p"] = 5.0
    bad.write_text(json.dumps(g))
    with pytest.raises(InvalidGraph):
        run_generation(config(tmp_path, graph=str(bad)), write=False)


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ValueError):
        GenerationConfig.from_dict({"graph": "recipe", "nn": 3})
    with pytest.raises(ValueError):
        GenerationConfig.from_dict({"n": 0})


def test_explicit_backend_wins(tmp_path):
    backend = MockBackend()
    run_generation(config(tmp_path, n=2), backend=backend, write=False)
    assert backend.requests
