from todsynth.eval.agreement import aggregate_ratings, cohens_kappa
from todsynth.eval.bleu import self_bleu, sentence_bleu
from todsynth.eval.intents import IntentNormalizer, LexicalEmbedder, RemoteEmbedder, normalize_intent
from todsynth.eval.judge import judge_relevance, relevance_summary
from todsynth.eval.metrics import (
    MetricReport,
    confusion_matrix,
    evaluate_turns,
    intent_metrics,
    slot_metrics,
)
from todsynth.eval.stats import dataset_stats

__all__ = [
    "IntentNormalizer",
    "LexicalEmbedder",
    "MetricReport",
    "RemoteEmbedder",
    "aggregate_ratings",
    "cohens_kappa",
    "confusion_matrix",
    "dataset_stats",
    "evaluate_turns",
    "intent_metrics",
    "judge_relevance",
    "normalize_intent",
    "relevance_summary",
    "self_bleu",
    "sentence_bleu",
    "slot_metrics",
]
