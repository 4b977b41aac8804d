"""Shared exception types. Every error carries a stable machine-readable code."""

from __future__ import annotations


class AlscCrError(Exception):
    """Base class for all toolkit errors."""

    code = "Error"

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return f"{self.code}: {self.message}" if self.message else self.code


# corpus ingestion

class MalformedXml(AlscCrError):
    code = "MalformedXml"


class SchemaViolation(AlscCrError):
    code = "SchemaViolation"


class UnknownPolarityLabel(AlscCrError):
    code = "UnknownPolarityLabel"


class DuplicateInstance(AlscCrError):
    code = "DuplicateInstance"


class MalformedRecord(AlscCrError):
    code = "MalformedRecord"

    def __init__(self, message: str = "", line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TaskMismatch(AlscCrError):
    code = "TaskMismatch"


# case labeling

class UnknownInstance(AlscCrError):
    code = "UnknownInstance"


class DecisionOnNonPronounCase(AlscCrError):
    code = "DecisionOnNonPronounCase"


class ConflictingDuplicateDecisions(AlscCrError):
    code = "ConflictingDuplicateDecisions"


# dataset building

class UnreviewedCasesRemain(AlscCrError):
    code = "UnreviewedCasesRemain"

    def __init__(self, instance_ids: list[str]):
        preview = ", ".join(instance_ids[:5])
        more = f" (+{len(instance_ids) - 5} more)" if len(instance_ids) > 5 else ""
        super().__init__(f"{len(instance_ids)} unreviewed pronoun cases block the build: {preview}{more}")
        self.instance_ids = instance_ids


class EmptyPartition(AlscCrError):
    code = "EmptyPartition"


class InsufficientInstances(AlscCrError):
    code = "InsufficientInstances"


# prompt rendering

class SpanOutOfBounds(AlscCrError):
    code = "SpanOutOfBounds"


# backend protocol

class BackendUnavailable(AlscCrError):
    code = "BackendUnavailable"


class TrainFailed(AlscCrError):
    code = "TrainFailed"

    def __init__(self, error_code: str, message: str):
        super().__init__(f"{error_code}: {message}")
        self.error_code = error_code


class BackendTimeout(AlscCrError):
    code = "Timeout"


class UnknownModel(AlscCrError):
    code = "UnknownModel"


# orchestration

class MissingValMetric(AlscCrError):
    code = "MissingValMetric"


class ConfigError(AlscCrError):
    code = "ConfigError"


# metrics and statistics

class LengthMismatch(AlscCrError):
    code = "LengthMismatch"


class EmptyEval(AlscCrError):
    code = "EmptyEval"


class TooFewSamples(AlscCrError):
    code = "TooFewSamples"


# reporting

class MissingCell(AlscCrError):
    code = "MissingCell"
