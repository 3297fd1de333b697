import filecmp
import json
import logging
import subprocess
import sys
from pathlib import Path

import pytest

from todsynth.cli import main

ROOT = Path(__file__).resolve().parents[1]
JUDGE_SCRIPT = ROOT / "src" / "todsynth" / "data" / "mock" / "judge_always_two.jsonl"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def gen_config(tmp_path, n=10):
    path = tmp_path / "gen.json"
    path.write_text(json.dumps({"graph": "recipe", "corpus": "recipes", "n": n,
                                "backend": {"kind": "mock"}, "output_path": str(tmp_path / "data")}))
    return path


@pytest.fixture
def dataset(tmp_path, capsys):
    assert run(capsys, "generate", gen_config(tmp_path), "--workers", 1)[0] == 0
    return tmp_path / "data" / "train.jsonl"


def test_validate_exit_codes(tmp_path, capsys, caplog):
    code, out, _ = run(capsys, "validate", "recipe")
    assert code == 0 and json.loads(out)["ok"] is True

    g = json.loads((ROOT / "src/todsynth/data/graphs/recipe.json").read_text())
    for e in g["edges"]:
        if e["from"] == g["start"]:
            e["p"] = 0.9
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(g))
    code, out, _ = run(capsys, "validate", bad)
    assert code == 1 and "PROB_SUM" in out and "PROB_SUM" in caplog.text

    assert run(capsys, "validate", tmp_path / "missing.json")[0] == 2


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["validate"])
    assert info.value.code == 2


def test_generate_and_rerun(tmp_path, capsys, dataset):
    assert len(dataset.read_text().splitlines()) == 10
    first = dataset.read_bytes()
    code, out, _ = run(capsys, "generate", gen_config(tmp_path), "--workers", 4)
    assert code == 0 and json.loads(out)["generated"] == 10
    assert dataset.read_bytes() == first
    assert (tmp_path / "data" / "manifest.json").exists()


def test_generate_overrides(tmp_path, capsys):
    code, _, _ = run(capsys, "generate", gen_config(tmp_path), "-n", 3, "--output", tmp_path / "o", "--seed", 9)
    assert code == 0
    assert len((tmp_path / "o" / "train.jsonl").read_text().splitlines()) == 3
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"] == 9


def test_sample(tmp_path, capsys):
    code, out, _ = run(capsys, "sample", "recipe", "-n", 50, "--walks", tmp_path / "w.jsonl")
    assert code == 0 and json.loads(out)["n"] == 50
    assert len((tmp_path / "w.jsonl").read_text().splitlines()) == 50


def test_evaluate(tmp_path, capsys, dataset):
    side = dataset.with_name("train.sidecar.jsonl")
    code, out, _ = run(capsys, "evaluate", dataset, side, "recipe", "--confusion", tmp_path / "c.csv")
    report = json.loads(out)
    assert code == 0
    assert report["intent"] == {"accuracy": 1.0, "precision": 1.0, "recall": 1.0, "f1": 1.0}
    assert report["slot"] == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    assert (tmp_path / "c.csv").read_text().startswith("gold\\pred,")

    short = tmp_path / "short.jsonl"
    short.write_text(json.dumps({"intent": "select"}) + "\n")
    assert run(capsys, "evaluate", dataset, short, "recipe")[0] == 1


def test_evaluate_normalizes_free_text(tmp_path, capsys):
    gold = tmp_path / "gold.jsonl"
    pred = tmp_path / "pred.jsonl"
    gold.write_text("\n".join(json.dumps({"intent": i}) for i in ["add_to_cart", "show_cart"]) + "\n")
    pred.write_text("\n".join(json.dumps({"intent": i}) for i in ["ADD TO CART", "show cart"]) + "\n")
    code, out, _ = run(capsys, "evaluate", gold, pred, "ecommerce")
    assert code == 0 and json.loads(out)["intent"]["accuracy"] == 1.0


def test_diversity(tmp_path, capsys, dataset):
    code, out, _ = run(capsys, "diversity", dataset)
    report = json.loads(out)
    assert code == 0 and 0 < report["all"]["self_bleu"] <= 1

    same = tmp_path / "same.txt"
    same.write_text("make me some soup\n" * 4)
    code, out, _ = run(capsys, "diversity", same, "--text")
    assert code == 0 and json.loads(out)["all"]["self_bleu"] == pytest.approx(1.0)

    one = tmp_path / "one.txt"
    one.write_text("only one\n")
    assert run(capsys, "diversity", one, "--text")[0] == 1


def test_judge(tmp_path, capsys, dataset):
    rows = [json.loads(x) for x in dataset.read_text().splitlines()]
    responses = tmp_path / "resp.jsonl"
    responses.write_text("".join(
        json.dumps({"example_id": r["example_id"], "turn_index": 1, "response": "sure, here it is"}) + "\n"
        for r in rows))
    backend = tmp_path / "judge.json"
    backend.write_text(json.dumps({"kind": "mock", "script": str(JUDGE_SCRIPT), "fallback": "error"}))
    labels = tmp_path / "labels.jsonl"
    code, out, _ = run(capsys, "judge", dataset, "--responses", responses, "--backend", backend,
                       "--labels-out", labels)
    assert code == 0
    summary = json.loads(out)["summary"]
    assert summary["average"] == 2.0 and summary["distribution"]["2"] == 100.0

    code, out, _ = run(capsys, "judge", "--labels", labels, "--against", labels)
    assert code == 0 and json.loads(out)["kappa"] == 1.0


def test_judge_mixed_tally(tmp_path, capsys):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    a.write_text("".join(f"{x}\n" for x in [0, 1, 1, 2, 2, 2, 2, 1, 0, 2]))
    b.write_text("".join(json.dumps({"ratings": r}) + "\n" for r in
                         [[0], [1, 2], [1], [2], [2, 2], [2, 1], [2], [1], [0], [2]]))
    code, out, _ = run(capsys, "judge", "--labels", a, "--against", b)
    report = json.loads(out)
    assert code == 0
    assert report["a"]["counts"] == {"0": 2, "1": 3, "2": 5}
    # b aggregates to 0,1,1,2,2,1,2,1,0,2
    assert report["b"]["counts"] == {"0": 2, "1": 4, "2": 4}
    assert run(capsys, "judge", "--labels", a)[0] == 2


def test_stats(tmp_path, capsys, caplog, dataset):
    caplog.set_level(logging.INFO)
    code, out, _ = run(capsys, "stats", dataset, "--out", tmp_path / "s.json")
    assert code == 0 and out == ""
    stats = json.loads((tmp_path / "s.json").read_text())
    assert stats["conversations"]["n"] == 10
    assert "tokens per user utterance" in caplog.text


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "todsynth.cli", "validate", "ecommerce"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["ok"] is True


def test_commands_are_idempotent(tmp_path, capsys, dataset):
    a = run(capsys, "stats", dataset)[1]
    b = run(capsys, "stats", dataset)[1]
    assert a == b
    run(capsys, "evaluate", dataset, dataset, "recipe", "--out", tmp_path / "e1.json")
    run(capsys, "evaluate", dataset, dataset, "recipe", "--out", tmp_path / "e2.json")
    assert filecmp.cmp(tmp_path / "e1.json", tmp_path / "e2.json", shallow=False)
