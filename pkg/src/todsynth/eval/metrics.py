"""Intent and slot scoring, and confusion matrices."""

from __future__ import annotations

import csv
import difflib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from todsynth.errors import LengthMismatch, UnknownLabel


@dataclass
class MetricReport:
    intent_accuracy: float = 0.0
    intent_precision: float = 0.0
    intent_recall: float = 0.0
    intent_f1: float = 0.0
    slot_precision: float = 0.0
    slot_recall: float = 0.0
    slot_f1: float = 0.0
    n_turns: int = 0
    per_intent: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_turns": self.n_turns,
            "intent": {
                "accuracy": self.intent_accuracy,
                "precision": self.intent_precision,
                "recall": self.intent_recall,
                "f1": self.intent_f1,
            },
            "slot": {"precision": self.slot_precision, "recall": self.slot_recall, "f1": self.slot_f1},
            "per_intent": self.per_intent,
        }


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def intent_metrics(gold: Sequence[str], pred: Sequence[str]) -> MetricReport:
    """Accuracy and micro P/R/F1; TP/FP/FN are summed over intents first."""
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted intents")
    if not gold:
        raise LengthMismatch("need at least one turn")
    tp, fp, fn = Counter(), Counter(), Counter()
    for g, p in zip(gold, pred):
        if g == p:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    labels = sorted(set(gold) | set(pred))
    TP, FP, FN = sum(tp.values()), sum(fp.values()), sum(fn.values())
    precision = TP / (TP + FP) if TP + FP else 0.0
    recall = TP / (TP + FN) if TP + FN else 0.0
    return MetricReport(
        intent_accuracy=TP / len(gold),
        intent_precision=precision,
        intent_recall=recall,
        intent_f1=_f1(precision, recall),
        n_turns=len(gold),
        per_intent={lab: {"tp": tp[lab], "fp": fp[lab], "fn": fn[lab]} for lab in labels},
    )


_WS = re.compile(r"\s+")


def normalize_slot_value(value: str) -> str:
    return _WS.sub(" ", str(value).strip().lower())


def _pairs(slots: Mapping[str, str]) -> set[tuple[str, str]]:
    return {(name, normalize_slot_value(v)) for name, v in slots.items()}


def slot_metrics(gold: Sequence[Mapping[str, str]], pred: Sequence[Mapping[str, str]], *,
                 similarity: float | None = None) -> tuple[float, float, float]:
    """Micro precision/recall/F1 over (slot name, normalized value) pairs.

    Matching is exact after normalization unless ``similarity`` is given, in
    which case a predicted value counts when its ``difflib`` ratio to the gold
    value of the same slot reaches the threshold.  With no slots on either
    side the result is (1, 1, 1).
    """
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted slot maps")
    tp = n_gold = n_pred = 0
    for g, p in zip(gold, pred):
        gp, pp = _pairs(g), _pairs(p)
        n_gold += len(gp)
        n_pred += len(pp)
        if similarity is None:
            tp += len(gp & pp)
        else:
            gold_by_name = dict(gp)
            tp += sum(
                1 for name, v in pp
                if name in gold_by_name
                and difflib.SequenceMatcher(None, gold_by_name[name], v).ratio() >= similarity
            )
    if n_gold == 0 and n_pred == 0:
        return 1.0, 1.0, 1.0
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    return precision, recall, _f1(precision, recall)


def confusion_matrix(gold: Sequence[str], pred: Sequence[str], labels: Sequence[str]) -> np.ndarray:
    """``counts[i, j]`` = number of turns with gold ``labels[i]`` predicted as ``labels[j]``."""
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted intents")
    pos = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold, pred):
        for lab in (g, p):
            if lab not in pos:
                raise UnknownLabel(f"label {lab!r} is not in the label set")
        counts[pos[g], pos[p]] += 1
    return counts


def write_confusion_csv(matrix: np.ndarray, labels: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gold\\pred", *labels])
        for lab, row in zip(labels, matrix):
            w.writerow([lab, *(int(x) for x in row)])


def evaluate_turns(gold_intents: Sequence[str], pred_intents: Sequence[str],
                   gold_slots: Sequence[Mapping[str, str]], pred_slots: Sequence[Mapping[str, str]],
                   *, similarity: float | None = None) -> MetricReport:
    report = intent_metrics(gold_intents, pred_intents)
    report.slot_precision, report.slot_recall, report.slot_f1 = slot_metrics(
        gold_slots, pred_slots, similarity=similarity
    )
    return report
