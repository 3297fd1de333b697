from todsynth.llm.backend import (
    Backend,
    BackendConfig,
    ChatMessage,
    CompletionRequest,
    MockBackend,
    MockRule,
    RemoteBackend,
    complete,
    make_backend,
)
from todsynth.llm.prompts import PromptRegistry, PromptTemplate, load_prompts, render

__all__ = [
    "Backend",
    "BackendConfig",
    "ChatMessage",
    "CompletionRequest",
    "MockBackend",
    "MockRule",
    "PromptRegistry",
    "PromptTemplate",
    "RemoteBackend",
    "complete",
    "load_prompts",
    "make_backend",
    "render",
]
