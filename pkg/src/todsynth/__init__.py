"""Graph-driven synthetic task-oriented dialogue generation and evaluation."""

from todsynth.dataformat import export_dataset, parse, read_dataset, serialize
from todsynth.dialogue import DialogueTurn, StateVariables, SystemState, TrainingExample
from todsynth.graph import TransitionGraph, load_graph, validate
from todsynth.pipeline import GenerationConfig, GenerationReport, run_generation
from todsynth.retrieval import Corpus, SearchIndex, SeedDocument, build_index, ingest, retrieve_with_target, search
from todsynth.sampler import RandomWalk, sample_walk, sample_walks
from todsynth.simulator import generate_query, simulate_conversation

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "DialogueTurn",
    "GenerationConfig",
    "GenerationReport",
    "RandomWalk",
    "SearchIndex",
    "SeedDocument",
    "StateVariables",
    "SystemState",
    "TrainingExample",
    "TransitionGraph",
    "build_index",
    "export_dataset",
    "generate_query",
    "ingest",
    "load_graph",
    "parse",
    "read_dataset",
    "retrieve_with_target",
    "run_generation",
    "sample_walk",
    "sample_walks",
    "search",
    "serialize",
    "simulate_conversation",
    "validate",
]
