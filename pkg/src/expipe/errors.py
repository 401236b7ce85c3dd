"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


# core model
class InvalidPath(PipelineError):
    pass


class ArtifactIOError(PipelineError, OSError):
    pass


class ParseError(PipelineError):
    pass


class SchemaError(PipelineError):
    pass


class InvariantError(PipelineError):
    pass


# query DSL
class QueryError(PipelineError):
    pass


class QuerySyntaxError(QueryError):
    pass


class NotPowerOfTwo(QueryError):
    pass


class NonDivisible(QueryError):
    pass


class EmptySet(QueryError):
    pass


class DuplicateLabel(QueryError):
    pass


class UnknownVariable(QueryError):
    pass


class MissingCase(QueryError):
    pass


# XML engine
class XmlSyntaxError(PipelineError):
    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnsupportedFeature(PipelineError):
    pass


class PathSyntaxError(PipelineError):
    pass


class TransformError(PipelineError):
    def __init__(self, message: str, path: str = "") -> None:
        super().__init__(message)
        self.path = path


class NoMatch(TransformError):
    pass


class AmbiguousPath(TransformError):
    pass


# platform / executor
class PlatformError(PipelineError):
    pass


class MissingPlaceholder(PlatformError):
    pass


class UnknownPlaceholder(PlatformError):
    pass


class ReservedName(PlatformError):
    pass


class MissingInput(PipelineError):
    def __init__(self, paths) -> None:
        self.paths = [str(p) for p in paths]
        super().__init__("missing run inputs: " + ", ".join(self.paths))


class EmptyPlan(PipelineError):
    pass


class SubmitterNotFound(PipelineError):
    pass


class SubmitFailed(PipelineError):
    def __init__(self, message: str, stderr: str = "") -> None:
        super().__init__(message)
        self.stderr = stderr


# statistics
class NoSuccessfulRuns(PipelineError):
    pass


class ShapeMismatch(PipelineError):
    pass


class MissingOutput(PipelineError):
    pass


class CsvParseError(PipelineError):
    pass


class UnknownColumn(PipelineError):
    pass


class LengthMismatch(PipelineError):
    pass


# deliverables / comparison
class EmptySeries(PipelineError):
    pass


class NonFiniteValue(PipelineError):
    pass


class EmptyCsv(PipelineError):
    pass


class CriteriaMismatch(PipelineError):
    pass


class TooFewBatches(PipelineError):
    pass


# driver
class UsageError(PipelineError):
    pass


class PrerequisiteMissing(PipelineError):
    def __init__(self, stage: int, what: str) -> None:
        super().__init__(f"stage {stage}: prerequisite missing: {what}")
        self.stage = stage
