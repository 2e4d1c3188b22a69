"""
Turns raw LLM replies into summaries and patch sets.
"""

import json
import logging
import re

from src.errors import MalformedJsonError, NoJsonFoundError, ReplyParseError
from src.models.jsonpath import render_path
from src.models.pathpatch import PatchKind, PatchSet, patch_set_from_wire
from src.models.schema import normalize_reply, validate

logger = logging.getLogger(__name__)

UPDATED_MARKER = "[UPDATED OBJECTS]"
ADDED_MARKER = "[ADDED OBJECTS]"

_FENCE = re.compile(r"```(?:json|JSON)?[ \t]*\n?(.*?)```", re.DOTALL)
_SECTION_HEAD = re.compile(r"\[(?:UPDATED OBJECTS|ADDED OBJECTS|THOUGHTS FOR UPDATE|THOUGHTS FOR ADD)\]")
# a string literal (kept) or a comma that only precedes a closing bracket (dropped)
_TRAILING_COMMA = re.compile(r'("(?:\\.|[^"\\])*")|,(\s*[}\]])')
_DECODER = json.JSONDecoder()


#####################################################
# JSON EXTRACTION
#####################################################

def _balanced_end(text, start):
    """Index just past the brace that closes text[start], or None."""
    depth = 0
    in_string = False
    escaped = False
    for index in range(start, len(text)):
        char = text[index]
        if in_string:
            if escaped:
                escaped = False
            elif char == "\\":
                escaped = True
            elif char == '"':
                in_string = False
        elif char == '"':
            in_string = True
        elif char == "{":
            depth += 1
        elif char == "}":
            depth -= 1
            if depth == 0:
                return index + 1
    return None


def _strip_trailing_commas(snippet):
    return _TRAILING_COMMA.sub(lambda m: m.group(1) or m.group(2), snippet)


def _decode_object(text, start, raw_output, base_offset=0):
    try:
        obj, _ = _DECODER.raw_decode(text, start)
        return obj
    except json.JSONDecodeError:
        pass
    end = _balanced_end(text, start)
    if end is None:
        raise MalformedJsonError("Unbalanced braces in JSON object", raw_output, base_offset + start)
    try:
        obj = json.loads(_strip_trailing_commas(text[start:end]))
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"Invalid JSON: {exc.msg}", raw_output, base_offset + start + exc.pos) from None
    logger.debug("Recovered JSON object after removing trailing commas")
    return obj


def extract_json(text):
    """
    Extracts the first JSON object that parses from an LLM reply.

    An optional code fence is stripped first. Each '{' is tried in turn, so prose
    braces ahead of the object are skipped. Trailing commas before a closing
    brace or bracket are tolerated.

    Args:
        text (str): Raw reply

    Returns:
        dict: The parsed object

    Raises:
        NoJsonFoundError: The reply contains no '{'
        MalformedJsonError: No candidate parses; carries the first candidate's offset
    """
    if not isinstance(text, str):
        raise NoJsonFoundError("Reply is not text", repr(text))
    body, base = text, 0
    fence = _FENCE.search(text)
    if fence and "{" in fence.group(1):
        body, base = fence.group(1), fence.start(1)
    start = body.find("{")
    if start < 0:
        raise NoJsonFoundError("No JSON object found in reply", text)
    first_error = None
    while start >= 0:
        try:
            return _decode_object(body, start, text, base)
        except MalformedJsonError as exc:
            first_error = first_error or exc
        # objects nested in a balanced but broken candidate are not candidates
        start = body.find("{", _balanced_end(body, start) or start + 1)
    raise first_error


def parse_summary(text, schema):
    """
    Parses a generate/update/dedup/compress reply into a schema-valid summary.

    Args:
        text (str): Raw reply
        schema (Schema): Required shape

    Returns:
        dict: The repaired, validated summary

    Raises:
        ReplyParseError: No JSON, malformed JSON, or a reply that does not validate
    """
    doc = normalize_reply(schema, extract_json(text))
    report = validate(schema, doc)
    if not report.valid:
        raise ReplyParseError(f"Reply does not match schema '{schema.name}': {report.describe()}", text)
    return doc


#####################################################
# CHAIN-OF-KEY REPLIES
#####################################################

def _section(text, marker):
    position = text.rfind(marker)
    if position < 0:
        return None
    start = position + len(marker)
    following = _SECTION_HEAD.search(text, start)
    end = following.start() if following else len(text)
    return start, text[start:end]


def parse_cok_response(text):
    """
    Parses the [UPDATED OBJECTS] and [ADDED OBJECTS] sections of a CoK reply.

    The last occurrence of each marker wins, so an echoed prompt example does not
    shadow the answer. Entries are classified by their own "update"/"add" key.

    Args:
        text (str): Raw CoK reply

    Returns:
        PatchSet: Proposals plus entries rejected as malformed or unparseable

    Raises:
        MalformedJsonError: A present section holds JSON that does not parse
    """
    patch = PatchSet()
    for marker, kind in ((UPDATED_MARKER, PatchKind.UPDATE), (ADDED_MARKER, PatchKind.ADD)):
        found = _section(text, marker)
        if found is None:
            logger.warning("CoK reply has no %s section", marker)
            continue
        offset, region = found
        start = region.find("{")
        if start < 0:
            logger.warning("CoK reply section %s holds no JSON object", marker)
            continue
        patch = patch.merged(patch_set_from_wire(_decode_object(region, start, text, offset), kind))
    return patch


def render_cok_response(patch):
    """
    Serializes a PatchSet into the CoK reply skeleton read by parse_cok_response.

    Rejected entries are not rendered.

    Args:
        patch (PatchSet): Proposals to render

    Returns:
        str: Reply text with both thought headers and both object sections
    """
    updated = {text: {"update": p.value} for text, p in patch.updates.items()}
    added = {text: {"add": p.value} for text, p in patch.adds.items()}
    update_paths = json.dumps([render_path(p.path) for p in patch.updates.values()], ensure_ascii=False)
    add_paths = json.dumps([render_path(p.path) for p in patch.adds.values()], ensure_ascii=False)
    return "\n".join([
        "[THOUGHTS FOR UPDATE]",
        f"1. The content should be updated at the following JSONPaths: {update_paths}",
        "",
        UPDATED_MARKER,
        json.dumps(updated, indent=2, ensure_ascii=False),
        "",
        "[THOUGHTS FOR ADD]",
        f"1. The content should be added at the following JSONPaths: {add_paths}",
        "",
        ADDED_MARKER,
        json.dumps(added, indent=2, ensure_ascii=False),
        "",
    ])
