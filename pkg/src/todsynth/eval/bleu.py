"""BLEU and Self-BLEU.

Self-BLEU scores each utterance against all the others as references and
averages; lower means a more diverse set.  No smoothing: an utterance with
zero clipped matches at some order scores 0.  Orders longer than the
hypothesis are left out of the geometric mean, so a short utterance that
reappears verbatim still scores 1.
"""

from __future__ import annotations

import bisect
import math
import re
from collections import Counter
from typing import Sequence

from todsynth.errors import TooFewUtterances

_PUNCT = re.compile(r"[^\w\s]|_", re.UNICODE)


def bleu_tokenize(text: str) -> list[str]:
    return _PUNCT.sub("", text.lower()).split()


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(hyp_len: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - hyp_len), r))


def _combine(hyp_len: int, matches: Sequence[int], totals: Sequence[int], ref_len: int) -> float:
    orders = [(m, t) for m, t in zip(matches, totals) if t > 0]
    if not orders or any(m == 0 for m, _ in orders):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in orders) / len(orders)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def sentence_bleu(references: Sequence[Sequence[str]], hypothesis: Sequence[str], max_n: int = 4) -> float:
    """Uniform-weight BLEU of one tokenized hypothesis against tokenized references."""
    if not hypothesis or not references:
        return 0.0
    matches, totals = [], []
    for n in range(1, max_n + 1):
        hyp = ngrams(hypothesis, n)
        best: Counter = Counter()
        for ref in references:
            best |= ngrams(ref, n)
        matches.append(sum(min(c, best[g]) for g, c in hyp.items()))
        totals.append(sum(hyp.values()))
    return _combine(len(hypothesis), matches, totals, _closest_ref_len(len(hypothesis), [len(r) for r in references]))


def self_bleu(utterances: Sequence[str], max_n: int = 4) -> float:
    """Mean BLEU of each utterance against all the others.

    Runs in roughly linear time: for every n-gram it keeps the two largest
    per-utterance counts, which is enough to know the best count among the
    *other* utterances.
    """
    if len(utterances) < 2:
        raise TooFewUtterances("self-BLEU needs at least two utterances")
    toks = [bleu_tokenize(u) for u in utterances]
    grams = [[ngrams(t, n) for n in range(1, max_n + 1)] for t in toks]

    top: list[dict[tuple, tuple[int, int, int]]] = [{} for _ in range(max_n)]
    for i, per_order in enumerate(grams):
        for n, counter in enumerate(per_order):
            table = top[n]
            for g, c in counter.items():
                first, owner, second = table.get(g, (0, -1, 0))
                if c > first:
                    table[g] = (c, i, first)
                elif c > second:
                    table[g] = (first, owner, c)

    lengths = sorted(len(t) for t in toks)
    total = 0.0
    for i, t in enumerate(toks):
        if not t:
            continue
        matches, totals = [], []
        for n, counter in enumerate(grams[i]):
            table = top[n]
            m = 0
            for g, c in counter.items():
                first, owner, second = table[g]
                m += min(c, second if owner == i else first)
            matches.append(m)
            totals.append(sum(counter.values()))
        total += _combine(len(t), matches, totals, _closest_other_len(lengths, len(t)))
    return total / len(toks)


def _closest_other_len(sorted_lengths: list[int], hyp_len: int) -> int:
    """Closest reference length to ``hyp_len`` once one copy of it is removed."""
    pos = bisect.bisect_left(sorted_lengths, hyp_len)
    candidates = sorted_lengths[max(0, pos - 1):pos] + sorted_lengths[pos + 1:pos + 2]
    # sorted_lengths[pos] is the hypothesis itself (or an equal-length twin)
    if pos + 1 < len(sorted_lengths) and sorted_lengths[pos + 1] == hyp_len:
        return hyp_len
    return _closest_ref_len(hyp_len, candidates)
