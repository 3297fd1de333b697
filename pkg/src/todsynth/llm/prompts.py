"""Prompt templates with ``{name}`` placeholders, and a directory-backed registry."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

from todsynth.errors import MissingVariable, PromptError, UnknownVariable

PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def placeholders(body: str) -> frozenset[str]:
    return frozenset(PLACEHOLDER.findall(body))


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    required_vars: frozenset[str]

    def __post_init__(self) -> None:
        found = placeholders(self.body)
        if found != self.required_vars:
            raise PromptError(
                f"template {self.id!r}: placeholders {sorted(found)} != required_vars {sorted(self.required_vars)}"
            )

    @classmethod
    def from_body(cls, id: str, body: str) -> "PromptTemplate":
        return cls(id, body, placeholders(body))


def render(template: PromptTemplate, bindings: Mapping[str, object]) -> str:
    """Substitute every placeholder of ``template``.

    Braces that do not form a ``{identifier}`` placeholder are left alone, so
    templates may contain literal JSON.
    """
    missing = sorted(template.required_vars - bindings.keys())
    if missing:
        raise MissingVariable(missing[0], template.id)
    extra = sorted(bindings.keys() - template.required_vars)
    if extra:
        warnings.warn(
            UnknownVariable(f"template {template.id!r} ignores bindings {extra}"), stacklevel=2
        )
    return PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template.body)


class PromptRegistry(Mapping[str, PromptTemplate]):
    """Templates keyed by id; one ``<id>.txt`` file per template on disk."""

    def __init__(self, templates: Mapping[str, PromptTemplate] | None = None):
        self._templates = dict(templates or {})

    def __getitem__(self, key: str) -> PromptTemplate:
        try:
            return self._templates[key]
        except KeyError:
            raise PromptError(f"unknown prompt template {key!r}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._templates)

    def __len__(self) -> int:
        return len(self._templates)

    def __contains__(self, key: object) -> bool:
        return key in self._templates

    def add(self, template: PromptTemplate) -> None:
        self._templates[template.id] = template

    @classmethod
    def from_dir(cls, path: str | Path) -> "PromptRegistry":
        root = Path(path)
        if not root.is_dir():
            raise PromptError(f"prompt directory {root} does not exist")
        reg = cls()
        for f in sorted(root.glob("*.txt")):
            reg.add(PromptTemplate.from_body(f.stem, f.read_text(encoding="utf-8").rstrip("\n")))
        return reg


def bundled_prompts_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "prompts"


def load_prompts(path: str | Path | None = None) -> PromptRegistry:
    return PromptRegistry.from_dir(path if path is not None else bundled_prompts_dir())
