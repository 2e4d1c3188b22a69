"""
Chain-of-Key patch application.

An LLM proposes Update/Add entries keyed by JSON path; this module applies them
to a summary document programmatically. Every operation returns a new document
and never removes an existing key or list value.
"""

import copy
import logging
from dataclasses import dataclass, field
from enum import Enum

from src.errors import PatchError, PathParseError
from src.models.jsonpath import parse_path, render_path
from src.models.schema import NodeKind, node_at, validate, validate_value

logger = logging.getLogger(__name__)

_MISSING = object()


class PatchKind(str, Enum):
    UPDATE = "update"
    ADD = "add"


class PatchErrorCode(str, Enum):
    PATH_NOT_FOUND = "path-not-found"
    PARENT_NOT_FOUND = "parent-not-found"
    KEY_ALREADY_EXISTS = "key-already-exists"
    TYPE_MISMATCH = "type-mismatch"
    SCHEMA_VIOLATION = "schema-violation"


class SkipReason(str, Enum):
    PATH_NOT_FOUND = "path-not-found"
    CONVERTED_TO_UPDATE = "key-already-exists-converted-to-update"
    TYPE_MISMATCH = "type-mismatch"
    UNPARSEABLE_PATH = "unparseable-path"
    SCHEMA_VIOLATION = "schema-violation"
    SUPERSEDED_BY_UPDATE = "superseded-by-update"
    MALFORMED_ENTRY = "malformed-entry"


_SKIP_FOR_CODE = {
    PatchErrorCode.PATH_NOT_FOUND: SkipReason.PATH_NOT_FOUND,
    PatchErrorCode.PARENT_NOT_FOUND: SkipReason.PATH_NOT_FOUND,
    PatchErrorCode.TYPE_MISMATCH: SkipReason.TYPE_MISMATCH,
    PatchErrorCode.SCHEMA_VIOLATION: SkipReason.SCHEMA_VIOLATION,
    PatchErrorCode.KEY_ALREADY_EXISTS: SkipReason.CONVERTED_TO_UPDATE,
}


@dataclass(frozen=True)
class ProposedUpdate:
    path: object
    value: object


@dataclass(frozen=True)
class ProposedAdd:
    path: object
    value: object


@dataclass(frozen=True)
class RejectedEntry:
    path_text: str
    kind: PatchKind
    reason: SkipReason
    detail: str = ""


@dataclass(frozen=True)
class PatchSet:
    """
    Parsed CoK proposals. `updates` and `adds` map path text to proposals in
    emission order; entries whose path does not parse live in `rejected`.
    """

    updates: dict = field(default_factory=dict)
    adds: dict = field(default_factory=dict)
    rejected: tuple = ()

    @classmethod
    def from_proposals(cls, updates=None, adds=None, malformed=()):
        """
        Builds a PatchSet from raw path-text -> value mappings.

        Args:
            updates (Mapping[str, Any]): Raw update values keyed by path text
            adds (Mapping[str, Any]): Raw add values keyed by path text
            malformed (Iterable[RejectedEntry]): Entries already known to be unusable

        Returns:
            PatchSet: Paths parsed; unparseable ones moved to `rejected`
        """
        rejected = list(malformed)
        parsed = {PatchKind.UPDATE: {}, PatchKind.ADD: {}}
        for kind, raw, proposal in (
            (PatchKind.UPDATE, updates or {}, ProposedUpdate),
            (PatchKind.ADD, adds or {}, ProposedAdd),
        ):
            for text, value in raw.items():
                try:
                    path = parse_path(text)
                except PathParseError as exc:
                    rejected.append(RejectedEntry(text, kind, SkipReason.UNPARSEABLE_PATH, exc.reason))
                    continue
                parsed[kind][text] = proposal(path, value)
        return cls(parsed[PatchKind.UPDATE], parsed[PatchKind.ADD], tuple(rejected))

    def merged(self, other):
        """Union with another PatchSet; on a repeated path text the proposal already in `self` is kept."""
        updates, adds = dict(self.updates), dict(self.adds)
        for text, proposal in other.updates.items():
            updates.setdefault(text, proposal)
        for text, proposal in other.adds.items():
            adds.setdefault(text, proposal)
        return PatchSet(updates, adds, self.rejected + other.rejected)

    def __len__(self):
        return len(self.updates) + len(self.adds) + len(self.rejected)


@dataclass(frozen=True)
class OutcomeEntry:
    path: str
    kind: PatchKind
    reason: SkipReason = None


@dataclass(frozen=True)
class PatchOutcome:
    applied: tuple = ()
    skipped: tuple = ()
    result_valid: bool = True

    def to_dict(self):
        return {
            "applied": [{"path": e.path, "kind": e.kind.value} for e in self.applied],
            "skipped": [
                {"path": e.path, "kind": e.kind.value, "reason": e.reason.value} for e in self.skipped
            ],
            "result_valid": self.result_valid,
        }

    @classmethod
    def from_dict(cls, obj):
        return cls(
            tuple(OutcomeEntry(e["path"], PatchKind(e["kind"])) for e in obj.get("applied", [])),
            tuple(
                OutcomeEntry(e["path"], PatchKind(e["kind"]), SkipReason(e["reason"]))
                for e in obj.get("skipped", [])
            ),
            obj.get("result_valid", True),
        )


#####################################################
# RESOLUTION
#####################################################

def _lookup(doc, path):
    node = doc
    for segment in path.segments:
        if not isinstance(node, dict) or segment not in node:
            return _MISSING
        node = node[segment]
    return node


def resolve(doc, path):
    """
    Walks object fields and map keys by segment name.

    Args:
        doc: SummaryDoc to read
        path (JsonPath): Path to resolve

    Returns:
        The subtree at the path, or None when it does not exist
    """
    found = _lookup(doc, path)
    return None if found is _MISSING else found


def exists(doc, path):
    return _lookup(doc, path) is not _MISSING


#####################################################
# SINGLE OPERATIONS
#####################################################

def _union(existing, value, node):
    if node.kind is NodeKind.LIST:
        merged = list(existing)
        for item in value:
            if item not in merged:
                merged.append(copy.deepcopy(item))
        return merged
    if node.kind in (NodeKind.MAP, NodeKind.OBJECT):
        merged = dict(existing)
        for key, child in value.items():
            child_node = node.value_type if node.kind is NodeKind.MAP else node.field(key)
            if key in merged:
                merged[key] = _union(merged[key], child, child_node)
            else:
                merged[key] = copy.deepcopy(child)
        return merged
    return value


def _set_at(doc, path, value):
    result = copy.deepcopy(doc)
    parent = result
    for segment in path.segments[:-1]:
        parent = parent[segment]
    parent[path.key] = value
    return result


def apply_update(doc, path, value, schema):
    """
    Integrates new content at an existing path.

    String lists get an order-preserving union that skips verbatim duplicates;
    maps and objects are merged key by key; string leaves are replaced.

    Args:
        doc: Current summary
        path (JsonPath): Existing path to update
        value: Proposed value, same type as the schema node at the path
        schema (Schema): Governing schema

    Returns:
        A new document; nothing outside `path` changes

    Raises:
        PatchError: path-not-found or type-mismatch
    """
    text = render_path(path)
    current = _lookup(doc, path)
    if current is _MISSING:
        raise PatchError(PatchErrorCode.PATH_NOT_FOUND, text)
    node = node_at(schema, path)
    if node is None:
        raise PatchError(PatchErrorCode.TYPE_MISMATCH, text, "path is not described by the schema")
    report = validate_value(node, value, path.segments, partial=True)
    if not report.valid:
        raise PatchError(PatchErrorCode.TYPE_MISMATCH, text, report.describe())
    return _set_at(doc, path, _union(current, value, node))


def apply_add(doc, path, value, schema):
    """
    Inserts a new key under an existing parent.

    Args:
        doc: Current summary
        path (JsonPath): Path of the key to create
        value: Value for the new key; partial objects are allowed
        schema (Schema): Governing schema

    Returns:
        A new document with the key appended to its parent

    Raises:
        PatchError: schema-violation, key-already-exists, parent-not-found or type-mismatch
    """
    text = render_path(path)
    node = node_at(schema, path)
    if node is None:
        raise PatchError(PatchErrorCode.SCHEMA_VIOLATION, text, "path is not legal under the schema")
    if exists(doc, path):
        raise PatchError(PatchErrorCode.KEY_ALREADY_EXISTS, text)
    parent = doc if path.parent is None else _lookup(doc, path.parent)
    if parent is _MISSING or not isinstance(parent, dict):
        raise PatchError(PatchErrorCode.PARENT_NOT_FOUND, text)
    report = validate_value(node, value, path.segments, partial=True)
    if not report.valid:
        raise PatchError(PatchErrorCode.TYPE_MISMATCH, text, report.describe())
    return _set_at(doc, path, copy.deepcopy(value))


#####################################################
# BATCH APPLICATION
#####################################################

def apply_patch_set(doc, patch, schema):
    """
    Applies every update, then every add, skipping entries that fail.

    An add on an existing key is merged as an update and audited as
    key-already-exists-converted-to-update. A path present in both groups is
    only updated.

    Args:
        doc: Current summary; expected to validate against `schema`
        patch (PatchSet): Proposals parsed from a CoK reply
        schema (Schema): Governing schema

    Returns:
        tuple: (new document, PatchOutcome)
    """
    baseline_valid = validate(schema, doc).valid
    if not baseline_valid:
        logger.warning("Applying a patch set to a document that does not validate")

    current = copy.deepcopy(doc)
    applied, skipped = [], []

    def skip(text, kind, reason, detail=""):
        logger.warning("Skipping %s at %s: %s %s", kind.value, text, reason.value, detail)
        skipped.append(OutcomeEntry(text, kind, reason))

    def attempt(operation, proposal):
        candidate = operation(current, proposal.path, proposal.value, schema)
        if baseline_valid and not validate(schema, candidate).valid:
            raise PatchError(PatchErrorCode.SCHEMA_VIOLATION, render_path(proposal.path))
        return candidate

    for entry in patch.rejected:
        skip(entry.path_text, entry.kind, entry.reason, entry.detail)

    updated_paths = set()
    for text, proposal in patch.updates.items():
        updated_paths.add(proposal.path)
        try:
            current = attempt(apply_update, proposal)
        except PatchError as exc:
            skip(text, PatchKind.UPDATE, _SKIP_FOR_CODE[exc.code], str(exc))
            continue
        applied.append(OutcomeEntry(text, PatchKind.UPDATE))

    for text, proposal in patch.adds.items():
        if proposal.path in updated_paths:
            skip(text, PatchKind.ADD, SkipReason.SUPERSEDED_BY_UPDATE)
            continue
        try:
            current = attempt(apply_add, proposal)
        except PatchError as exc:
            if exc.code is not PatchErrorCode.KEY_ALREADY_EXISTS:
                skip(text, PatchKind.ADD, _SKIP_FOR_CODE[exc.code], str(exc))
                continue
            try:
                current = attempt(apply_update, proposal)
            except PatchError as inner:
                skip(text, PatchKind.ADD, _SKIP_FOR_CODE[inner.code], str(inner))
                continue
            skip(text, PatchKind.ADD, SkipReason.CONVERTED_TO_UPDATE)
            continue
        applied.append(OutcomeEntry(text, PatchKind.ADD))

    outcome = PatchOutcome(tuple(applied), tuple(skipped), validate(schema, current).valid)
    return current, outcome


#####################################################
# WIRE FORMAT
#####################################################

def patch_set_from_wire(obj, section=PatchKind.UPDATE):
    """
    Reads the wire shape {path: {"update": v}} / {path: {"add": v}}.

    Args:
        obj (dict): Mapping of path text to a one-key proposal object
        section (PatchKind): Kind recorded on malformed entries

    Returns:
        PatchSet: Entries with neither key are rejected as malformed
    """
    updates, adds, malformed = {}, {}, []
    for text, entry in obj.items():
        if isinstance(entry, dict) and "update" in entry:
            updates[text] = entry["update"]
        elif isinstance(entry, dict) and "add" in entry:
            adds[text] = entry["add"]
        else:
            malformed.append(RejectedEntry(text, section, SkipReason.MALFORMED_ENTRY, "entry has neither 'update' nor 'add'"))
    return PatchSet.from_proposals(updates, adds, malformed)


def patch_set_to_wire(patch):
    wire = {text: {"update": p.value} for text, p in patch.updates.items()}
    for text, proposal in patch.adds.items():
        wire.setdefault(text, {"add": proposal.value})
    return wire
