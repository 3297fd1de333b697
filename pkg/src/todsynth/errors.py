"""Exception types shared across the package."""

from __future__ import annotations


class TodSynthError(Exception):
    """Base class for every error raised by todsynth."""


# graph ---------------------------------------------------------------------


class ParseError(TodSynthError, ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class SchemaError(TodSynthError, ValueError):
    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class InvalidGraph(TodSynthError, ValueError):
    def __init__(self, report):
        self.report = report
        codes = ", ".join(sorted({e.code for e in report.errors}))
        super().__init__(f"graph failed validation: {codes}")


class TerminalNode(TodSynthError, ValueError):
    pass


class GlobalMassExceedsOne(TodSynthError, ValueError):
    pass


# llm backend -----------------------------------------------------------------


class PromptError(TodSynthError):
    pass


class MissingVariable(PromptError, KeyError):
    def __init__(self, name: str, template_id: str | None = None):
        self.name = name
        self.template_id = template_id
        super().__init__(name)

    def __str__(self) -> str:
        where = f" in template {self.template_id!r}" if self.template_id else ""
        return f"missing variable {self.name!r}{where}"


class UnknownVariable(UserWarning):
    """Emitted (as a warning) when bindings carry names a template does not use."""


class BackendError(TodSynthError):
    pass


class AuthError(BackendError):
    pass


class RateLimited(BackendError):
    pass


class Timeout(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class EmptyGeneration(BackendError):
    pass


# retrieval -------------------------------------------------------------------


class DuplicateId(TodSynthError, ValueError):
    def __init__(self, doc_id: str, line: int):
        self.doc_id = doc_id
        self.line = line
        super().__init__(f"duplicate document id {doc_id!r} on line {line}")


class EmptyCorpus(TodSynthError, ValueError):
    pass


class TargetNotInCorpus(TodSynthError, KeyError):
    pass


# data format -----------------------------------------------------------------


class FormatError(TodSynthError, ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})")


class StateJsonError(FormatError):
    pass


class InvalidExample(TodSynthError, ValueError):
    pass


# evaluation ------------------------------------------------------------------


class LengthMismatch(TodSynthError, ValueError):
    pass


class UnknownLabel(TodSynthError, ValueError):
    pass


class TooFewUtterances(TodSynthError, ValueError):
    pass


class UnparseableJudgment(TodSynthError, ValueError):
    pass


class EmptyRatings(TodSynthError, ValueError):
    pass


class EmptyInput(TodSynthError, ValueError):
    pass


class EmptyDataset(TodSynthError, ValueError):
    pass


class EmbedderError(TodSynthError):
    pass


class GenerationFailed(TodSynthError):
    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)
