"""``todsynth`` command line: validate, sample, generate, evaluate, diversity, judge, stats.

Exit codes: 0 success, 1 domain error, 2 usage or I/O error.  Reports are
JSON on stdout unless ``--out`` names a file; logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Iterator, Sequence

from todsynth.dataformat import parse, read_dataset
from todsynth.dialogue import TrainingExample
from todsynth.errors import GenerationFailed, LengthMismatch, TodSynthError, TooFewUtterances
from todsynth.eval.agreement import aggregate_ratings, cohens_kappa
from todsynth.eval.bleu import self_bleu
from todsynth.eval.intents import IntentNormalizer
from todsynth.eval.judge import judge_relevance, relevance_summary
from todsynth.eval.metrics import confusion_matrix, evaluate_turns, write_confusion_csv
from todsynth.eval.stats import dataset_stats, format_stats
from todsynth.graph import load_graph, validate
from todsynth.llm.backend import BackendConfig, make_backend
from todsynth.llm.prompts import load_prompts
from todsynth.pipeline import GenerationConfig, default_workers, resolve_graph, run_generation
from todsynth.sampler import DEFAULT_MAX_LEN, intent_frequencies, sample_walks, write_walks

log = logging.getLogger("todsynth")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _emit(report: Any, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
        log.info("report written to %s", out)
    else:
        sys.stdout.write(text)


def _jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise UsageError(f"{path}:{lineno}: not JSON ({exc.msg})") from exc


# -- validate / sample / generate --------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    graph = load_graph(resolve_graph(args.graph))
    prompts = load_prompts(args.prompts) if args.prompts else None
    report = validate(graph, prompts)
    for issue in report.errors:
        log.error("%s: %s", issue.code, issue.message)
    for issue in report.warnings:
        log.warning("%s: %s", issue.code, issue.message)
    _emit(report.to_dict(), args.out)
    return EXIT_OK if report.ok else EXIT_DOMAIN


def cmd_sample(args: argparse.Namespace) -> int:
    graph = load_graph(resolve_graph(args.graph))
    walks = sample_walks(graph, args.n, args.seed, args.max_len, workers=args.workers or default_workers())
    if args.walks:
        write_walks(walks, args.walks)
    _emit({
        "n": len(walks),
        "seed": args.seed,
        "truncated": sum(w.truncated for w in walks),
        "intent_frequencies": intent_frequencies(walks),
    }, args.out)
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    config = GenerationConfig.from_file(args.config)
    if args.n is not None:
        config.n = args.n
    if args.seed is not None:
        config.master_seed = args.seed
    if args.output is not None:
        config.output_path = args.output
    if args.workers is not None:
        config.workers = args.workers
    try:
        result = run_generation(config)
    except GenerationFailed as exc:
        log.error("%s", exc)
        if exc.report is not None:
            _emit(exc.report.to_dict(), args.out)
        return EXIT_DOMAIN
    log.info("generated %d of %d conversations into %s",
             result.report.generated, result.report.requested, result.output_dir)
    _emit(result.report.to_dict(), args.out)
    return EXIT_OK


# -- evaluate ----------------------------------------------------------------------


def load_turn_labels(path: str | Path) -> list[tuple[str, dict[str, str]]]:
    """Per-turn (intent, slots) pairs.

    Lines may be exported dataset rows (``text``), sidecar rows (``states``)
    or plain ``{"intent": ..., "slots": {...}}`` records.
    """
    out: list[tuple[str, dict[str, str]]] = []
    for lineno, row in _jsonl(path):
        if not isinstance(row, dict):
            raise UsageError(f"{path}:{lineno}: expected a JSON object")
        if "text" in row:
            out.extend((s.intent, dict(s.slots)) for s in parse(row["text"]).states)
        elif "states" in row:
            out.extend((s["intent"], {k: str(v) for k, v in s.get("slots", {}).items()}) for s in row["states"])
        elif "intent" in row:
            out.append((str(row["intent"]), {k: str(v) for k, v in (row.get("slots") or {}).items()}))
        else:
            raise UsageError(f"{path}:{lineno}: no intent, states or text field")
    return out


def cmd_evaluate(args: argparse.Namespace) -> int:
    graph = load_graph(resolve_graph(args.graph))
    gold = load_turn_labels(args.gold)
    pred = load_turn_labels(args.pred)
    if len(gold) != len(pred):
        raise LengthMismatch(f"gold has {len(gold)} turns, predictions have {len(pred)}")
    labels = sorted(graph.intents)
    normalizer = IntentNormalizer(labels)
    pred_intents = normalizer.normalize_many([p[0] for p in pred])
    gold_intents = [g[0] for g in gold]
    report = evaluate_turns(gold_intents, pred_intents, [g[1] for g in gold], [p[1] for p in pred],
                            similarity=args.slot_similarity)
    all_labels = sorted(set(labels) | set(gold_intents))
    matrix = confusion_matrix(gold_intents, pred_intents, all_labels)
    result = report.to_dict()
    if args.confusion:
        write_confusion_csv(matrix, all_labels, args.confusion)
        result["confusion_csv"] = str(args.confusion)
    result["confusion_labels"] = all_labels
    result["confusion"] = matrix.tolist()
    _emit(result, args.out)
    return EXIT_OK


# -- diversity / stats ---------------------------------------------------------------


def _utterances(path: str, as_text: bool) -> dict[str, list[str]]:
    if as_text:
        lines = [ln.rstrip("\n") for ln in Path(path).read_text(encoding="utf-8").splitlines()]
        return {"all": [ln for ln in lines if ln.strip()]}
    pools: dict[str, list[str]] = {"user": [], "system": []}
    for ex in read_dataset(path):
        for t in ex.turns:
            if t.role in pools:
                pools[t.role].append(t.text)
    pools["all"] = pools["user"] + pools["system"]
    return pools


def cmd_diversity(args: argparse.Namespace) -> int:
    pools = _utterances(args.dataset, args.text)
    result: dict[str, Any] = {"max_n": args.max_n}
    for name, utts in pools.items():
        try:
            result[name] = {"self_bleu": self_bleu(utts, max_n=args.max_n), "utterances": len(utts)}
        except TooFewUtterances:
            result[name] = {"self_bleu": None, "utterances": len(utts)}
    if result["all"]["self_bleu"] is None:
        raise TooFewUtterances("need at least two utterances")
    _emit(result, args.out)
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    stats = dataset_stats(read_dataset(args.dataset))
    log.info("\n%s", format_stats(stats))
    _emit(stats, args.out)
    return EXIT_OK


# -- judge ---------------------------------------------------------------------------


def load_labels(path: str | Path) -> list[int]:
    """One label per line: a bare integer, ``{"label": n}`` or ``{"ratings": [...]}``."""
    out = []
    for lineno, row in _jsonl(path):
        if isinstance(row, dict) and "ratings" in row:
            out.append(aggregate_ratings([int(r) for r in row["ratings"]]))
        elif isinstance(row, dict) and "label" in row:
            out.append(int(row["label"]))
        elif isinstance(row, int):
            out.append(row)
        else:
            raise UsageError(f"{path}:{lineno}: no label")
    return out


def _judge_items(dataset: Sequence[TrainingExample], responses_path: str):
    by_id = {ex.example_id: ex for ex in dataset}
    for lineno, row in _jsonl(responses_path):
        ex = by_id.get(row.get("example_id"))
        if ex is None:
            raise UsageError(f"{responses_path}:{lineno}: unknown example_id {row.get('example_id')!r}")
        system_positions = [i for i, t in enumerate(ex.turns) if t.role == "system"]
        k = int(row.get("turn_index", 0))
        if not 0 <= k < len(system_positions):
            raise UsageError(f"{responses_path}:{lineno}: example has no system turn {k}")
        pos = system_positions[k]
        yield row, ex.turns[:pos], row["response"], ex.turns[pos].text


def cmd_judge(args: argparse.Namespace) -> int:
    if args.labels:
        if not args.against:
            raise UsageError("--labels needs --against")
        a, b = load_labels(args.labels), load_labels(args.against)
        result = {"kappa": cohens_kappa(a, b), "n": len(a),
                  "a": relevance_summary(a), "b": relevance_summary(b)}
        _emit(result, args.out)
        return EXIT_OK
    if not (args.dataset and args.responses and args.backend):
        raise UsageError("judge needs DATASET, --responses and --backend (or --labels/--against)")
    backend = make_backend(BackendConfig.from_file(args.backend))
    dataset = read_dataset(args.dataset)
    labels, records = [], []
    for row, history, candidate, reference in _judge_items(dataset, args.responses):
        label = judge_relevance(backend, history, candidate, reference)
        labels.append(label)
        records.append({"example_id": row["example_id"], "turn_index": int(row.get("turn_index", 0)),
                        "label": label})
    if args.labels_out:
        with open(args.labels_out, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
    _emit({"summary": relevance_summary(labels), "labels": records}, args.out)
    return EXIT_OK


# -- wiring --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="todsynth", description="Graph-driven synthetic dialogue generation.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        return sp

    sp = add("validate", cmd_validate, "check a transition graph")
    sp.add_argument("graph", help="graph JSON path or bundled name (recipe, ecommerce)")
    sp.add_argument("--prompts", help="prompt directory to resolve prompt ids against")

    sp = add("sample", cmd_sample, "sample random walks")
    sp.add_argument("graph")
    sp.add_argument("-n", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    sp.add_argument("--walks", help="write walks as JSONL here")
    sp.add_argument("--workers", type=int)

    sp = add("generate", cmd_generate, "generate and export a dataset from a config file")
    sp.add_argument("config")
    sp.add_argument("-n", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--output", help="dataset directory (overrides output_path)")
    sp.add_argument("--workers", type=int, help="parallel conversations (default: logical cores)")

    sp = add("evaluate", cmd_evaluate, "intent and slot metrics of predictions against gold")
    sp.add_argument("gold")
    sp.add_argument("pred")
    sp.add_argument("graph")
    sp.add_argument("--confusion", help="write the confusion matrix CSV here")
    sp.add_argument("--slot-similarity", type=float, help="fuzzy slot value match threshold in (0, 1]")

    sp = add("diversity", cmd_diversity, "Self-BLEU of user and system utterances")
    sp.add_argument("dataset")
    sp.add_argument("--text", action="store_true", help="input is plain text, one utterance per line")
    sp.add_argument("--max-n", type=int, default=4)

    sp = add("judge", cmd_judge, "relevance labels via an LLM judge, or kappa between label files")
    sp.add_argument("dataset", nargs="?")
    sp.add_argument("--responses", help="JSONL of {example_id, turn_index, response}")
    sp.add_argument("--backend", help="backend config JSON")
    sp.add_argument("--labels-out", help="write per-response labels as JSONL")
    sp.add_argument("--labels", help="label file A")
    sp.add_argument("--against", help="label file B")

    sp = add("stats", cmd_stats, "conversation and token statistics")
    sp.add_argument("dataset")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (TodSynthError, ValueError, KeyError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DOMAIN
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
