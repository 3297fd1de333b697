"""Dataset-level statistics (utterance counts and whitespace token counts)."""

from __future__ import annotations

import statistics
from typing import Iterable

from todsynth.dialogue import TrainingExample
from todsynth.errors import EmptyDataset


def _mean_sd(values: list[float]) -> dict[str, float]:
    if not values:
        return {"mean": 0.0, "sd": 0.0, "n": 0}
    return {"mean": statistics.fmean(values), "sd": statistics.pstdev(values), "n": len(values)}


def dataset_stats(examples: Iterable[TrainingExample]) -> dict[str, dict[str, float]]:
    """Mean and population standard deviation of conversation-size measures.

    Only system and user turns count as utterances; tokens are whitespace
    separated words.
    """
    examples = list(examples)
    if not examples:
        raise EmptyDataset("no conversations to summarize")
    utterances, conv_tokens, user_tokens, system_tokens = [], [], [], []
    for ex in examples:
        n_utt = 0
        n_tok = 0
        for t in ex.turns:
            if t.role not in ("system", "user"):
                continue
            k = len(t.text.split())
            n_utt += 1
            n_tok += k
            (user_tokens if t.role == "user" else system_tokens).append(k)
        utterances.append(n_utt)
        conv_tokens.append(n_tok)
    return {
        "conversations": {"mean": float(len(examples)), "sd": 0.0, "n": len(examples)},
        "utterances_per_conversation": _mean_sd(utterances),
        "tokens_per_conversation": _mean_sd(conv_tokens),
        "tokens_per_user_utterance": _mean_sd(user_tokens),
        "tokens_per_system_utterance": _mean_sd(system_tokens),
    }


def format_stats(stats: dict[str, dict[str, float]]) -> str:
    rows = [f"{'measure':<32}{'mean':>10}{'sd':>10}"]
    for name, v in stats.items():
        if name == "conversations":
            rows.append(f"{'total conversations':<32}{v['n']:>10d}")
            continue
        rows.append(f"{name.replace('_', ' '):<32}{v['mean']:>10.2f}{v['sd']:>10.2f}")
    return "\n".join(rows)
