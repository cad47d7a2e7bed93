"""Exception hierarchy shared across the package."""

from __future__ import annotations


class Sol2MoveError(Exception):
    """Base class for every error raised by this package."""


# frontend
class EncodingError(Sol2MoveError):
    pass


class UnparsableSource(Sol2MoveError):
    pass


class TemplateError(Sol2MoveError):
    pass


class PromptBudgetError(Sol2MoveError):
    """The prompt cannot fit the budget even with every comment dropped."""


# corpus
class EmptyDocument(Sol2MoveError):
    pass


class EmptyCorpus(Sol2MoveError):
    pass


class DimensionMismatch(Sol2MoveError, ValueError):
    pass


class InsufficientCorpus(Sol2MoveError):
    pass


class FormatVersionError(Sol2MoveError):
    pass


# planner / codegen
class PlanParseError(Sol2MoveError):
    def __init__(self, message: str, raw_response: str):
        super().__init__(message)
        self.raw_response = raw_response


class NoCodeBlock(Sol2MoveError):
    def __init__(self, message: str, raw_response: str):
        super().__init__(message)
        self.raw_response = raw_response


class EmptyPlan(Sol2MoveError):
    pass


class DuplicateIndex(Sol2MoveError):
    pass


# toolchain
class ToolchainError(Sol2MoveError):
    pass


class ToolNotFound(ToolchainError):
    pass


class ScriptExhausted(Sol2MoveError):
    """A scripted mock (LLM or toolchain) was called more times than scripted."""


# harvester
class ApiError(Sol2MoveError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class RateLimited(ApiError):
    def __init__(self, message: str, retry_after: float | None = None, status: int | None = None):
        super().__init__(message, status)
        self.retry_after = retry_after


class ConfigError(Sol2MoveError):
    pass
