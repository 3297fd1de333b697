import json

import pytest
from hypothesis import HealthCheck, given, settings

from strategies import examples
from todsynth.dataformat import export_dataset, parse, read_dataset, serialize, state_to_json
from todsynth.dialogue import DialogueTurn, SystemState, TrainingExample
from todsynth.errors import FormatError, InvalidExample, StateJsonError
from todsynth.llm.backend import MockBackend
from todsynth.sampler import sample_walks
from todsynth.simulator import simulate_conversation


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(examples())
def test_fuzz_roundtrip(ex):
    out = serialize(ex)
    assert parse(out) == ex
    assert serialize(parse(out)) == out


def test_generated_examples_roundtrip(recipe_graph, shop_graph, prompts, recipe_index, product_index):
    for graph, index in ((recipe_graph, recipe_index), (shop_graph, product_index)):
        for walk in sample_walks(graph, 25, 4):
            target = index.corpus.documents[walk.walk_id]
            ex = simulate_conversation(graph, walk, index, MockBackend(), prompts, target, walk.seed)
            assert parse(serialize(ex)) == ex


def test_state_json_is_canonical():
    s = SystemState("select", {"b": "2", "a": "ü"}, ())
    assert state_to_json(s) == '{"intent":"select","slots":{"a":"ü","b":"2"}}'
    assert state_to_json(SystemState("x", {}, ("d1",))) == '{"documents":["d1"],"intent":"x","slots":{}}'


def sample_example():
    s1, s2 = SystemState("start"), SystemState("search", {"query": "q"}, ("d1",))
    return TrainingExample("e1", 0, "d1", (DialogueTurn("system", "hi", s1), DialogueTurn("user", "find q", s2)), (s2,))


def test_layout():
    assert serialize(sample_example()) == (
        '<|meta|>\n{"example_id":"e1","target_doc":"d1","walk_id":0}\n<|end|>\n'
        '<|system|>\nhi\n<|state|>\n{"intent":"start","slots":{}}\n<|end|>\n'
        '<|user|>\nfind q\n<|state|>\n{"documents":["d1"],"intent":"search","slots":{"query":"q"}}\n<|end|>\n'
    )


def test_empty_input():
    with pytest.raises(FormatError) as err:
        parse("")
    assert err.value.offset == 0


def test_missing_state_names_the_turn():
    bad = serialize(sample_example()).replace('<|state|>\n{"documents"', '<|statx|>\n{"documents"')
    with pytest.raises(FormatError) as err:
        parse(bad)
    assert "turn 1" in str(err.value)


def test_unknown_role_offset():
    good = serialize(sample_example())
    bad = good.replace("<|user|>", "<|robot|>")
    with pytest.raises(FormatError) as err:
        parse(bad)
    assert err.value.offset == good.index("<|user|>")


def test_bad_state_json():
    bad = serialize(sample_example()).replace('{"intent":"start","slots":{}}', '{"intent":"start",')
    with pytest.raises(StateJsonError):
        parse(bad)


def test_empty_documents_list_is_rejected():
    plain = '{"intent":"start","slots":{}}'
    bad = serialize(sample_example()).replace(plain, '{"documents":[],"intent":"start","slots":{}}')
    with pytest.raises(StateJsonError):
        parse(bad)


def test_serialize_refuses_broken_examples():
    s = SystemState("x")
    ex = TrainingExample("e", 0, "d", (DialogueTurn("user", "hi", s),), (s,))
    with pytest.raises(InvalidExample):
        serialize(ex)


def test_export_writes_manifest(tmp_path):
    ex = sample_example()
    export_dataset([ex], tmp_path, "train", seed=3, graph_hash="abc")
    export_dataset([ex, ex], tmp_path, "test", seed=3, graph_hash="abc")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["splits"] == {"train": 1, "test": 2}
    assert manifest["seed"] == 3 and manifest["graph_hash"] == "abc"
    assert read_dataset(tmp_path / "test.jsonl") == [ex, ex]
    side = [json.loads(line) for line in (tmp_path / "train.sidecar.jsonl").read_text().splitlines()]
    assert side[0]["states"][0]["documents"] == ["d1"]
