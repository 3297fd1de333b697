"""LLM relevance judging on a three-level scale."""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable, Sequence

from todsynth.dialogue import DialogueTurn
from todsynth.errors import UnparseableJudgment
from todsynth.llm.backend import JUDGE_TEMPERATURE, Backend, CompletionRequest

LABELS = (0, 1, 2)

RUBRIC = (
    "Rate the candidate response on this scale:\n"
    "0 - irrelevant to the conversation, or it has serious problems\n"
    "1 - relevant, but not as good as the reference response\n"
    "2 - at least as good as the reference response"
)

JUDGE_TEMPLATE = (
    "You are grading the reply of a task assistant.\n\n"
    "{rubric}\n\n"
    "Conversation so far:\n{history}\n\n"
    "Reference response:\n{reference}\n\n"
    "Candidate response:\n{candidate}\n\n"
    "Answer with a single digit (0, 1 or 2)."
)

_DIGIT = re.compile(r"\d")


def parse_label(text: str) -> int | None:
    """First digit in ``text`` if it is 0, 1 or 2; otherwise ``None``."""
    m = _DIGIT.search(text)
    if m is None:
        return None
    value = int(m.group())
    return value if value in LABELS else None


def _history_text(history: Iterable[DialogueTurn | str]) -> str:
    lines = []
    for t in history:
        lines.append(t if isinstance(t, str) else f"{t.role}: {t.text}")
    return "\n".join(lines) or "(empty)"


def judge_relevance(backend: Backend, history: Sequence[DialogueTurn | str], candidate: str,
                    reference: str, *, attempts: int = 2) -> int:
    """Ask ``backend`` for a relevance label; one retry on unparseable output."""
    prompt = JUDGE_TEMPLATE.format(
        rubric=RUBRIC, history=_history_text(history), reference=reference, candidate=candidate
    )
    request = CompletionRequest.from_prompt(
        prompt, temperature=JUDGE_TEMPERATURE, max_tokens=8, model_id=getattr(backend, "model_id", "mock")
    )
    last = ""
    for _ in range(attempts):
        last = backend.complete(request)
        label = parse_label(last)
        if label is not None:
            return label
    raise UnparseableJudgment(f"could not read a 0/1/2 label from {last!r}")


def relevance_summary(labels: Sequence[int]) -> dict:
    """Share of each label in percent plus the mean label."""
    n = len(labels)
    counts = Counter(labels)
    return {
        "n": n,
        "distribution": {str(k): (100.0 * counts[k] / n if n else 0.0) for k in LABELS},
        "counts": {str(k): counts[k] for k in LABELS},
        "average": (sum(labels) / n) if n else 0.0,
    }
