"""
Exception hierarchy shared by every layer of the summarizer.

Each family carries the process exit code the CLI reports for it, so a CI job
can tell fixture drift (cassette misses) from logic regressions.
"""


class SummarizerError(Exception):
    """Base class for all summarizer failures."""

    exit_code = 1


class ConfigError(SummarizerError):
    """Invalid configuration, flags or schema definitions."""

    exit_code = 2


class SchemaError(ConfigError):
    """A schema definition breaks the node-kind rules."""


class DataError(SummarizerError):
    """Unreadable or inconsistent input files."""

    exit_code = 3


class BackendError(SummarizerError):
    """Transport or status failure while talking to an LLM backend."""

    exit_code = 4


class CassetteMissError(BackendError):
    """Scripted backend has no recorded response for a request."""

    def __init__(self, template_id, turn, digest, attempt=0):
        message = f"No cassette entry for template '{template_id}' at turn {turn}"
        if attempt:
            message += f" re-ask {attempt}"
        super().__init__(f"{message} (prompt digest {digest[:12]})")
        self.template_id = template_id
        self.turn = turn
        self.digest = digest
        self.attempt = attempt


class ReplyParseError(SummarizerError):
    """An LLM reply could not be turned into the structure we asked for."""

    exit_code = 5

    def __init__(self, message, raw_output=""):
        super().__init__(message)
        self.raw_output = raw_output


class NoJsonFoundError(ReplyParseError):
    """The reply contains no JSON object at all."""


class MalformedJsonError(ReplyParseError):
    """A JSON object starts in the reply but does not parse."""

    def __init__(self, message, raw_output="", offset=0):
        super().__init__(f"{message} (offset {offset})", raw_output)
        self.offset = offset


class MissingPlaceholderError(ConfigError):
    """A prompt template was rendered without one of its bindings."""


class PathParseError(ConfigError):
    """A JSON path text is outside the supported grammar."""

    def __init__(self, text, position, reason):
        super().__init__(f"Cannot parse path {text!r} at position {position}: {reason}")
        self.text = text
        self.position = position
        self.reason = reason


class PatchError(SummarizerError):
    """A single Update/Add could not be applied; `code` names the failed precondition."""

    def __init__(self, code, path_text, detail=""):
        message = f"{code.value} at {path_text}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.code = code
        self.path_text = path_text


class MergeError(SummarizerError):
    """Two summaries do not share a shape and cannot be merged."""


class BudgetUnreachableError(SummarizerError):
    """The token budget cannot be met under the configured policy."""

    exit_code = 6


class EmptySeriesError(SummarizerError):
    """Aggregation was asked for over zero turns."""


class PipelineError(SummarizerError):
    """A run aborted; `partial` holds the turns completed before the failure."""

    exit_code = 7

    def __init__(self, message, partial=None, cause=None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause
        if cause is not None and getattr(cause, "exit_code", None):
            self.exit_code = cause.exit_code
