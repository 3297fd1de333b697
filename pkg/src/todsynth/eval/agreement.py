"""Rating aggregation and Cohen's kappa."""

from __future__ import annotations

from collections import Counter
from typing import Hashable, Sequence

from todsynth.errors import EmptyRatings, LengthMismatch


def aggregate_ratings(ratings: Sequence[int]) -> int:
    """Majority label; ties go to the lowest tied label."""
    if not ratings:
        raise EmptyRatings("need at least one rating")
    counts = Counter(ratings)
    top = max(counts.values())
    return min(label for label, c in counts.items() if c == top)


def cohens_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement between two labelers.

    p_e comes from the product of the two marginal distributions.  When
    p_e is 1 both labelers used one identical label throughout, and the
    result is defined as 1.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} labels")
    if not a:
        raise LengthMismatch("need at least one labeled item")
    n = len(a)
    agree = sum(x == y for x, y in zip(a, b))
    ca, cb = Counter(a), Counter(b)
    # integer numerators keep the result exact up to one division, and symmetric
    chance = sum(ca[k] * cb[k] for k in ca)
    if chance == n * n:
        return 1.0
    return (agree * n - chance) / (n * n - chance)
