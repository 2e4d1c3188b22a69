"""
Key-only JSON paths of the form `$.attributes.Amenities` or `$.'attributes'.'Noise Level'`.

Only dotted key access is supported. Indices, wildcards, filters and recursive
descent are rejected with a positioned PathParseError.
"""

from dataclasses import dataclass

import pyparsing as pp

from src.errors import PathParseError

_BARE_SEGMENT = pp.Word(pp.alphanums + "_&")
_QUOTED_SEGMENT = pp.QuotedString(
    "'", esc_char="\\", multiline=True, convert_whitespace_escapes=False
)
_QUOTED_SEGMENT.add_condition(lambda t: len(t[0]) > 0, message="empty segment", fatal=True)

_PATH = pp.Suppress(pp.Literal("$")) + pp.OneOrMore(
    pp.Suppress(pp.Literal(".")) + (_QUOTED_SEGMENT | _BARE_SEGMENT)
)
_PATH.leave_whitespace()


@dataclass(frozen=True)
class JsonPath:
    """A parsed path; the `$` root is implicit and `segments` is never empty."""

    segments: tuple

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        if not segments:
            raise ValueError("A JSON path needs at least one segment")
        for segment in segments:
            if not isinstance(segment, str) or not segment:
                raise ValueError(f"Invalid path segment: {segment!r}")

    @property
    def key(self):
        return self.segments[-1]

    @property
    def parent(self):
        """Path of the containing map/object, or None when the parent is the root."""
        if len(self.segments) == 1:
            return None
        return JsonPath(self.segments[:-1])

    def child(self, segment):
        return JsonPath(self.segments + (segment,))

    def __str__(self):
        return render_path(self)


def _quote(segment):
    escaped = segment.replace("\\", "\\\\").replace("'", "\\'")
    return f"'{escaped}'"


def render_segments(segments):
    """
    Renders any segment sequence, including the empty one (`$`).

    Args:
        segments (Sequence[str]): Key segments below the root

    Returns:
        str: Canonical single-quoted path text
    """
    if not segments:
        return "$"
    return "$." + ".".join(_quote(s) for s in segments)


def render_path(path):
    """
    Renders a path in canonical form, e.g. `$.'attributes'.'Amenities'`.

    Args:
        path (JsonPath): Parsed path

    Returns:
        str: Canonical path text; parse_path(render_path(p)) == p
    """
    return render_segments(path.segments)


def _failure_reason(text, loc):
    if loc == 0 and not text.startswith("$"):
        return "missing '$' root"
    if loc >= len(text):
        return "trailing dot" if text.endswith(".") else "path has no segments"
    char = text[loc]
    if char == "[":
        return "index syntax is not supported"
    if char == "*":
        return "wildcards are not supported"
    if char == "'":
        return "unterminated quote"
    if char == ".":
        return "trailing dot" if loc + 1 == len(text) else "empty segment"
    if char.isspace():
        return "unquoted segment contains whitespace"
    return f"unexpected character {char!r}"


def parse_path(text):
    """
    Parses path text into a JsonPath.

    Args:
        text (str): Path such as "$.attributes.Amenities" or "$.'attributes'.'Noise Level'"

    Returns:
        JsonPath: Parsed segments

    Raises:
        PathParseError: With the failing position and a short reason
    """
    if not isinstance(text, str):
        raise PathParseError(repr(text), 0, "path must be a string")
    try:
        tokens = _PATH.parse_string(text, parse_all=True)
    except pp.ParseFatalException as exc:
        raise PathParseError(text, exc.loc, exc.msg) from None
    except pp.ParseBaseException as exc:
        raise PathParseError(text, exc.loc, _failure_reason(text, exc.loc)) from None
    return JsonPath(tuple(tokens))
