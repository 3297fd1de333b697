"""Role-tagged text format for training examples, and dataset export.

Grammar (one conversation)::

    conversation := meta turn*
    meta         := "<|meta|>\\n" JSON "\\n<|end|>\\n"
    turn         := "<|" role "|>\\n" TEXT "\\n" [ "<|state|>\\n" JSON "\\n" ] "<|end|>\\n"

``system`` and ``user`` turns carry the state block; auxiliary roles
(``suggestions``, ``retriever``, ``item_information``) do not.  State JSON is
canonical: sorted keys, no insignificant whitespace, ``documents`` present
only when non-empty.  Inside TEXT a backslash is written ``\\\\`` and ``<|``
is written ``<\\|`` so no text line can be mistaken for a delimiter.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

from todsynth.dialogue import (
    ROLES,
    STATEFUL_ROLES,
    DialogueTurn,
    SystemState,
    TrainingExample,
    canonical_json,
)
from todsynth.errors import FormatError, InvalidExample, StateJsonError

END = "<|end|>"
STATE = "<|state|>"
META = "<|meta|>"


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("<|", "<\\|")


def _unescape(text: str, offset: int) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text) or text[i + 1] not in "\\|":
                raise FormatError("dangling escape in text segment", offset + len(text[:i].encode()))
            out.append(text[i + 1])
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def state_to_json(state: SystemState) -> str:
    payload: dict = {"intent": state.intent, "slots": dict(state.slots)}
    if state.documents:
        payload["documents"] = list(state.documents)
    return canonical_json(payload)


def serialize(example: TrainingExample) -> str:
    problems = example.problems()
    if problems:
        raise InvalidExample(f"{example.example_id}: {problems[0]}")
    parts = [
        META + "\n"
        + canonical_json({"example_id": example.example_id, "target_doc": example.target_doc,
                          "walk_id": example.walk_id})
        + "\n" + END + "\n"
    ]
    for turn in example.turns:
        chunk = f"<|{turn.role}|>\n{_escape(turn.text)}\n"
        if turn.state is not None:
            chunk += f"{STATE}\n{state_to_json(turn.state)}\n"
        parts.append(chunk + END + "\n")
    return "".join(parts)


class _Reader:
    """Line cursor that tracks byte offsets for error reporting."""

    def __init__(self, text: str):
        self.lines = text.split("\n")
        # split leaves a trailing "" after the final newline
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.offsets = []
        pos = 0
        for ln in self.lines:
            self.offsets.append(pos)
            pos += len(ln.encode("utf-8")) + 1
        self.end = pos
        self.i = 0

    def done(self) -> bool:
        return self.i >= len(self.lines)

    def offset(self) -> int:
        return self.offsets[self.i] if self.i < len(self.lines) else self.end

    def take(self) -> tuple[str, int]:
        if self.done():
            raise FormatError("unexpected end of input", self.end)
        line, off = self.lines[self.i], self.offsets[self.i]
        self.i += 1
        return line, off


def _load_json(raw: str, offset: int, what: str, err=FormatError):
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise err(f"invalid {what} JSON: {exc.msg}", offset) from exc


def _parse_state(raw: str, offset: int, turn_no: int) -> SystemState:
    data = _load_json(raw, offset, f"state (turn {turn_no})", StateJsonError)
    if not isinstance(data, dict) or set(data) - {"intent", "slots", "documents"}:
        raise StateJsonError(f"turn {turn_no}: state must be an object with intent/slots[/documents]", offset)
    intent, slots = data.get("intent"), data.get("slots")
    docs = data.get("documents", [])
    if not isinstance(intent, str) or not isinstance(slots, dict):
        raise StateJsonError(f"turn {turn_no}: state needs string intent and object slots", offset)
    if not all(isinstance(k, str) and isinstance(v, str) for k, v in slots.items()):
        raise StateJsonError(f"turn {turn_no}: slot names and values must be strings", offset)
    if not isinstance(docs, list) or not all(isinstance(d, str) for d in docs):
        raise StateJsonError(f"turn {turn_no}: documents must be a list of strings", offset)
    if "documents" in data and not docs:
        raise StateJsonError(f"turn {turn_no}: empty documents list must be omitted", offset)
    return SystemState(intent, slots, tuple(docs))


def parse(text: str) -> TrainingExample:
    """Inverse of :func:`serialize`."""
    if not text:
        raise FormatError("empty input", 0)
    r = _Reader(text)
    line, off = r.take()
    if line != META:
        raise FormatError(f"expected {META} header", off)
    line, off = r.take()
    meta = _load_json(line, off, "meta")
    if not isinstance(meta, dict) or not {"example_id", "target_doc", "walk_id"} <= meta.keys():
        raise FormatError("meta needs example_id, target_doc and walk_id", off)
    line, off = r.take()
    if line != END:
        raise FormatError(f"expected {END} after meta", off)

    turns: list[DialogueTurn] = []
    while not r.done():
        header, off = r.take()
        if not (header.startswith("<|") and header.endswith("|>")):
            raise FormatError("expected a role header", off)
        role = header[2:-2]
        if role not in ROLES:
            raise FormatError(f"unknown role {role!r}", off)
        turn_no = len(turns)
        body: list[str] = []
        body_off = r.offset()
        while True:
            line, loff = r.take()
            if line in (STATE, END):
                break
            if line.startswith("<|"):
                raise FormatError(f"turn {turn_no} ({role}): unexpected delimiter {line!r}", loff)
            body.append(line)
        state = None
        if role in STATEFUL_ROLES:
            if line != STATE:
                raise FormatError(f"turn {turn_no} ({role}) is missing its state segment", loff)
            raw, soff = r.take()
            state = _parse_state(raw, soff, turn_no)
            line, loff = r.take()
        elif line == STATE:
            raise FormatError(f"turn {turn_no} ({role}) must not carry a state segment", loff)
        if line != END:
            raise FormatError(f"turn {turn_no} ({role}): expected {END}", loff)
        turn_text = _unescape("\n".join(body), body_off)
        if role not in STATEFUL_ROLES:
            _load_json(turn_text, body_off, f"{role} payload")
        turns.append(DialogueTurn(role, turn_text, state))

    example = TrainingExample(
        example_id=str(meta["example_id"]),
        walk_id=int(meta["walk_id"]),
        target_doc=str(meta["target_doc"]),
        turns=tuple(turns),
        states=tuple(t.state for t in turns if t.role == "user"),
    )
    problems = example.problems()
    if problems:
        raise FormatError(f"structurally invalid conversation: {problems[0]}", 0)
    return example


# -- export ----------------------------------------------------------------------


def sidecar_record(example: TrainingExample) -> dict:
    return {
        "example_id": example.example_id,
        "target_doc": example.target_doc,
        "states": [json.loads(state_to_json(s)) for s in example.states],
    }


def export_dataset(examples: Sequence[TrainingExample], path: str | Path, split_name: str, *,
                   seed: int | None = None, graph_hash: str | None = None) -> dict:
    """Write ``<split>.jsonl`` and ``<split>.sidecar.jsonl`` under directory ``path``.

    ``manifest.json`` in the same directory accumulates split counts, so
    exporting train then test yields one manifest covering both.
    """
    if not examples:
        raise ValueError("export_dataset needs at least one example")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / f"{split_name}.jsonl"
    side_path = out / f"{split_name}.sidecar.jsonl"
    with open(data_path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(canonical_json({"example_id": ex.example_id, "text": serialize(ex)}) + "\n")
    with open(side_path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(canonical_json(sidecar_record(ex)) + "\n")

    manifest_path = out / "manifest.json"
    manifest = {"splits": {}, "files": {}}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest["splits"][split_name] = len(examples)
    manifest.setdefault("files", {})[split_name] = {
        "data": data_path.name,
        "sidecar": side_path.name,
        "sha256": hashlib.sha256(data_path.read_bytes()).hexdigest(),
    }
    if seed is not None:
        manifest["seed"] = seed
    if graph_hash is not None:
        manifest["graph_hash"] = graph_hash
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def iter_dataset(path: str | Path) -> Iterable[TrainingExample]:
    """Examples from an exported ``<split>.jsonl`` file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            try:
                yield parse(row["text"])
            except FormatError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}", exc.offset) from exc


def read_dataset(path: str | Path) -> list[TrainingExample]:
    return list(iter_dataset(path))
