"""Exception types shared across the pipeline.

Every stage failure is a ``DeixisError`` subclass, so the replay harness can
catch one base class, attribute the failure to a pipeline stage, and keep the
batch running.
"""

from __future__ import annotations


class DeixisError(Exception):
    """Base class for all pipeline errors."""


# --- frame algebra / projection ---

class FrameMismatch(DeixisError):
    """Pose chaining was attempted across frames that do not line up."""


class BehindCamera(DeixisError):
    """A point at or behind the camera plane cannot be projected."""


# --- gaze / transcript streams ---

class EmptyWindow(DeixisError):
    """No gaze records intersect the requested time interval."""


class DegenerateInterval(DeixisError):
    """The requested interval is too short to contain a single sample tick."""


class WordNotFound(DeixisError):
    """The requested word occurrence does not exist in the transcript."""


# --- command interpretation ---

class NoTargetFound(DeixisError):
    """The command contains no referential expression to resolve."""


class RemoteAgentError(DeixisError):
    """A remote agent call failed; the original gateway error is chained."""


class MalformedAgentOutput(DeixisError):
    """Agent output failed schema validation.

    ``diagnostics`` lists one human-readable message per offending field.
    """

    def __init__(self, message: str, diagnostics: list[str] | None = None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


# --- scene observation ---

class NoObjectsDetected(DeixisError):
    """No annotated object matches the requested category."""


# --- intention fusion ---

class EmptyScene(DeixisError):
    """Fusion needs at least one candidate object."""


class EmptyTrace(DeixisError):
    """Fusion needs at least one projected gaze point."""


# --- cross-view alignment ---

class NoCorrespondence(DeixisError):
    """No robot-view region collected enough matched keypoints."""


# --- planning ---

class UnsupportedCommand(DeixisError):
    """The rule-based planner has no template for this command."""


class PolicyValidationError(DeixisError):
    """A generated policy failed validation; ``violations`` holds details."""

    def __init__(self, message: str, violations: list | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


# --- agent gateway ---

class Timeout(DeixisError):
    """The remote endpoint did not answer in time."""


class HttpError(DeixisError):
    """The remote endpoint answered with a non-success status."""

    def __init__(self, status: int, message: str = ""):
        super().__init__(f"HTTP {status}: {message}" if message else f"HTTP {status}")
        self.status = status


class CredentialMissing(DeixisError):
    """A required credential or endpoint setting is absent."""


class NoCannedResponse(DeixisError):
    """The offline agent has no canned reply for this request."""


# --- scenario ingestion ---

class ScenarioError(DeixisError):
    """A scenario file is structurally invalid; message carries diagnostics."""
