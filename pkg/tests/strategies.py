"""Hypothesis strategies for training examples, including escape-heavy text."""

import json

from hypothesis import strategies as st

from todsynth.dialogue import DialogueTurn, SystemState, TrainingExample

text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=60)
tricky = st.one_of(text, st.sampled_from(["<|end|>", "<|state|>", "\\", "a\\|b", "<\\|", "\n<|user|>\n", "", "\n\n"]))
ident = st.text("abcdefghijklmnopqrstuvwxyz_0123456789", min_size=1, max_size=12)
states = st.builds(
    SystemState,
    intent=ident,
    slots=st.dictionaries(ident, text, max_size=3),
    documents=st.lists(ident, max_size=4).map(tuple),
)
aux = st.builds(
    lambda role, payload: DialogueTurn(role, json.dumps(payload, ensure_ascii=False)),
    st.sampled_from(["suggestions", "retriever", "item_information"]),
    st.one_of(st.lists(text, max_size=3), st.dictionaries(ident, text, max_size=3)),
)


@st.composite
def examples(draw):
    turns, user_states = [], []
    for _ in range(draw(st.integers(0, 5))):
        turns.append(DialogueTurn("system", draw(tricky), draw(states)))
        s = draw(states)
        turns.append(DialogueTurn("user", draw(tricky), s))
        user_states.append(s)
        turns += draw(st.lists(aux, max_size=2))
    if not turns:
        turns.append(DialogueTurn("system", draw(tricky), draw(states)))
    return TrainingExample(draw(ident), draw(st.integers(0, 10**6)), draw(ident), tuple(turns), tuple(user_states))
