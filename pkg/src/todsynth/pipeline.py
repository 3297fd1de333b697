"""End-to-end dataset generation: sample walks, pick targets, simulate, export."""

from __future__ import annotations

import json
import logging
import os
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from todsynth.dataformat import export_dataset
from todsynth.dialogue import TrainingExample
from todsynth.errors import EmptyCorpus, GenerationFailed, InvalidGraph, TodSynthError
from todsynth.eval.stats import dataset_stats
from todsynth.graph import TransitionGraph, bundled_graph_path, load_graph, validate
from todsynth.llm.backend import Backend, BackendConfig, make_backend
from todsynth.llm.prompts import PromptRegistry, bundled_prompts_dir
from todsynth.retrieval import DEFAULT_K, SearchIndex, SeedDocument, build_index, bundled_corpus_path, ingest
from todsynth.sampler import DEFAULT_MAX_LEN, RandomWalk, derive_seed, sample_walks
from todsynth.simulator import SimulationSettings, simulate_conversation

log = logging.getLogger(__name__)

TARGET_STREAM = 1
SIMULATION_STREAM = 2


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass
class GenerationConfig:
    graph: str = "recipe"
    corpus: str = "recipes"
    prompts_dir: str | None = None
    backend: BackendConfig = field(default_factory=BackendConfig)
    n: int = 100
    master_seed: int = 0
    max_len: int = DEFAULT_MAX_LEN
    k: int = DEFAULT_K
    failure_threshold: float = 0.05
    output_path: str = "out"
    split: str = "train"
    workers: int | None = None

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir: Path | None = None) -> "GenerationConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown generation config keys: {unknown}")
        values = dict(raw)
        backend = values.get("backend", {})
        if isinstance(backend, str):
            bpath = Path(backend)
            if base_dir is not None and not bpath.is_absolute() and not bpath.exists():
                bpath = base_dir / bpath
            values["backend"] = BackendConfig.from_file(bpath)
        elif isinstance(backend, Mapping):
            values["backend"] = BackendConfig.from_dict(backend, base_dir=base_dir)
        cfg = cls(**values)
        if cfg.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 <= cfg.failure_threshold <= 1.0:
            raise ValueError("failure_threshold must be within [0, 1]")
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "GenerationConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)


def _resolve(value: str, bundled: Callable[[str], Path]) -> Path:
    """A path as given, or the bundled resource of that name."""
    p = Path(value)
    if p.exists():
        return p
    try:
        b = bundled(value)
    except (KeyError, ValueError):
        return p
    return b if b.exists() else p


def resolve_graph(value: str) -> Path:
    return _resolve(value, bundled_graph_path)


def resolve_corpus(value: str) -> Path:
    return _resolve(value, bundled_corpus_path)


@dataclass
class GenerationReport:
    requested: int
    generated: int
    failures: list[dict[str, Any]]
    truncated: int
    intent_counts: dict[str, int]
    intent_frequencies: dict[str, float]
    stats: dict[str, dict[str, float]] | None
    master_seed: int
    graph_hash: str

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / self.requested if self.requested else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "requested": self.requested,
            "generated": self.generated,
            "failure_count": len(self.failures),
            "failure_rate": self.failure_rate,
            "failures": self.failures,
            "truncated_walks": self.truncated,
            "intent_counts": self.intent_counts,
            "intent_frequencies": self.intent_frequencies,
            "stats": self.stats,
            "master_seed": self.master_seed,
            "graph_hash": self.graph_hash,
        }


@dataclass
class GenerationResult:
    examples: list[TrainingExample]
    walks: list[RandomWalk]
    report: GenerationReport
    output_dir: Path | None = None


def pick_target(documents: tuple[SeedDocument, ...], walk_seed: int) -> SeedDocument:
    return random.Random(derive_seed(walk_seed, TARGET_STREAM)).choice(documents)


def generate_examples(graph: TransitionGraph, index: SearchIndex, backend: Backend,
                      prompts: PromptRegistry, walks: list[RandomWalk], *,
                      settings: SimulationSettings | None = None,
                      workers: int = 1) -> tuple[list[TrainingExample], list[dict[str, Any]]]:
    """Simulate one conversation per walk.

    Failures are isolated per walk and returned alongside the successes.
    Output order follows walk order whatever the worker count.
    """
    documents = index.corpus.documents
    if not documents:
        raise EmptyCorpus("cannot pick targets from an empty corpus")

    def one(walk: RandomWalk) -> TrainingExample | dict[str, Any]:
        target = pick_target(documents, walk.seed)
        try:
            return simulate_conversation(
                graph, walk, index, backend, prompts, target,
                derive_seed(walk.seed, SIMULATION_STREAM), settings=settings,
            )
        except TodSynthError as exc:
            log.warning("walk %d failed: %s", walk.walk_id, exc)
            return {
                "walk_id": walk.walk_id,
                "error": type(exc).__name__,
                "message": str(exc),
                "turn_index": getattr(exc, "turn_index", None),
            }

    if workers <= 1:
        outcomes = [one(w) for w in walks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, walks))
    examples = [o for o in outcomes if isinstance(o, TrainingExample)]
    failures = [o for o in outcomes if not isinstance(o, TrainingExample)]
    return examples, failures


def intent_counts(examples: list[TrainingExample]) -> Counter:
    return Counter(s.intent for ex in examples for s in ex.states)


def run_generation(config: GenerationConfig, *, backend: Backend | None = None,
                   write: bool = True) -> GenerationResult:
    """Generate ``config.n`` conversations and (optionally) export them.

    ``backend`` overrides the one described by ``config.backend``.  Raises
    :class:`GenerationFailed` when the share of failed walks exceeds
    ``config.failure_threshold``; the report is still written first.
    """
    graph = load_graph(resolve_graph(config.graph))
    prompts = PromptRegistry.from_dir(config.prompts_dir or bundled_prompts_dir())
    report = validate(graph, prompts)
    if not report.ok:
        raise InvalidGraph(report)
    corpus = ingest(resolve_corpus(config.corpus))
    if not len(corpus):
        raise EmptyCorpus(f"corpus {config.corpus!r} has no valid documents")
    index = build_index(corpus)
    backend = backend or make_backend(config.backend)
    workers = config.workers or default_workers()
    settings = SimulationSettings(k=config.k)

    walks = sample_walks(graph, config.n, config.master_seed, config.max_len, workers=workers)
    examples, failures = generate_examples(graph, index, backend, prompts, walks,
                                           settings=settings, workers=workers)
    counts = intent_counts(examples)
    total = sum(counts.values())
    gen_report = GenerationReport(
        requested=config.n,
        generated=len(examples),
        failures=failures,
        truncated=sum(w.truncated for w in walks),
        intent_counts={k: counts.get(k, 0) for k in sorted(graph.intents)},
        intent_frequencies={k: (counts.get(k, 0) / total if total else 0.0) for k in sorted(graph.intents)},
        stats=dataset_stats(examples) if examples else None,
        master_seed=config.master_seed,
        graph_hash=graph.digest(),
    )

    out_dir = None
    if write:
        out_dir = Path(config.output_path)
        out_dir.mkdir(parents=True, exist_ok=True)
        if examples:
            export_dataset(examples, out_dir, config.split, seed=config.master_seed,
                           graph_hash=gen_report.graph_hash)
        (out_dir / f"{config.split}.report.json").write_text(
            json.dumps(gen_report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    if gen_report.failure_rate > config.failure_threshold:
        raise GenerationFailed(
            f"{len(failures)} of {config.n} walks failed "
            f"(threshold {config.failure_threshold:.0%})",
            gen_report,
        )
    return GenerationResult(examples, walks, gen_report, out_dir)
