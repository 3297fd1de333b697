"""Hand-built evaluation fixtures with their hand-computed answers."""

# 20 turns over intents A, B, C.
# gold A x8 -> predicted 6 A, 1 B, 1 C
# gold B x7 -> predicted 2 A, 5 B
# gold C x5 -> predicted 1 B, 4 C
GOLD_INTENTS = ["A"] * 8 + ["B"] * 7 + ["C"] * 5
PRED_INTENTS = ["A"] * 6 + ["B", "C"] + ["A"] * 2 + ["B"] * 5 + ["B"] + ["C"] * 4
# 15 of 20 correct; with one label per turn micro P = R = F1 = accuracy
INTENT_ACCURACY = 15 / 20
INTENT_MICRO = 15 / 20
PER_INTENT = {"A": {"tp": 6, "fp": 2, "fn": 2}, "B": {"tp": 5, "fp": 2, "fn": 2}, "C": {"tp": 4, "fp": 1, "fn": 1}}
CONFUSION = [[6, 1, 1], [2, 5, 0], [0, 1, 4]]

# slot maps for the same 20 turns
GOLD_SLOTS = (
    [{"query": "Fluffy Pancakes"}] * 5
    + [{"i": "2"}, {"duration": "5 minutes"}, {}, {"query": "taco dip", "attr": "spicy"}]
    + [{}] * 11
)
PRED_SLOTS = (
    [{"query": " fluffy  PANCAKES "}] * 5
    + [{"i": "3"}, {}, {"i": "1"}, {"query": "Taco Dip"}]
    + [{}] * 11
)
# tp = 5 + 1 = 6; gold pairs = 5 + 1 + 1 + 2 = 9; predicted pairs = 5 + 1 + 1 + 1 = 8
SLOT_PRECISION = 6 / 8
SLOT_RECALL = 6 / 9
SLOT_F1 = 12 / 17

SELF_BLEU_SENTENCES = [
    "the cat sat on the mat",
    "the cat sat on the rug",
    "a cat sat on the mat today",
]
