"""
Schemas describing the required shape of a structured summary.

The schema language has four node kinds (object, map, list, string). That is
enough for the entity and book templates and for user schemas loaded from JSON files.
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import jsonschema

from src.errors import SchemaError
from src.models.jsonpath import render_segments

logger = logging.getLogger(__name__)


class NodeKind(str, Enum):
    OBJECT = "object"
    MAP = "map"
    LIST = "list"
    STRING = "string"


class ViolationReason(str, Enum):
    UNKNOWN_FIELD = "unknown-field"
    MISSING_FIELD = "missing-field"
    LEAF_TYPE_MISMATCH = "leaf-type-mismatch"
    NON_STRING_KEY = "non-string-key"
    NON_LIST_VALUE = "non-list-value"
    NON_STRING_ELEMENT = "non-string-element"


@dataclass(frozen=True)
class SchemaNode:
    """
    One node of a schema tree.

    `fields` is an ordered tuple of (name, SchemaNode) pairs and is only used by
    objects; `value_type` belongs to maps and `element_type` to lists.
    """

    kind: NodeKind
    fields: tuple = ()
    value_type: "SchemaNode" = None
    element_type: "SchemaNode" = None
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", NodeKind(self.kind))
        object.__setattr__(self, "fields", tuple(tuple(f) for f in self.fields))
        if self.kind is NodeKind.OBJECT:
            names = [name for name, _ in self.fields]
            if any(not isinstance(n, str) or not n for n in names):
                raise SchemaError("Object field names must be non-empty strings")
            if len(set(names)) != len(names):
                raise SchemaError(f"Duplicate object field names in {names}")
        elif self.fields:
            raise SchemaError(f"Only object nodes may declare fields, not {self.kind.value}")
        if self.kind is NodeKind.MAP and self.value_type is None:
            raise SchemaError("Map nodes need a value_type")
        if self.kind is NodeKind.LIST and self.element_type is None:
            raise SchemaError("List nodes need an element_type")

    @property
    def field_names(self):
        return [name for name, _ in self.fields]

    def field(self, name):
        for field_name, node in self.fields:
            if field_name == name:
                return node
        return None

    def is_string_list(self):
        return self.kind is NodeKind.LIST and self.element_type.kind is NodeKind.STRING


@dataclass(frozen=True)
class Schema:
    name: str
    root: SchemaNode

    def __post_init__(self):
        if self.root.kind is not NodeKind.OBJECT:
            raise SchemaError(f"Schema root must be an object, got {self.root.kind.value}")


@dataclass(frozen=True)
class Violation:
    segments: tuple
    reason: ViolationReason
    detail: str = ""

    @property
    def path(self):
        return render_segments(self.segments)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def valid(self):
        return not self.violations

    def describe(self):
        return "; ".join(f"{v.reason.value} at {v.path}" for v in self.violations)


def string_node(description=""):
    return SchemaNode(NodeKind.STRING, description=description)


def list_of(element, description=""):
    return SchemaNode(NodeKind.LIST, element_type=element, description=description)


def map_of(value, description=""):
    return SchemaNode(NodeKind.MAP, value_type=value, description=description)


def object_of(fields, description=""):
    return SchemaNode(NodeKind.OBJECT, fields=tuple(fields), description=description)


def entity_schema():
    """
    Schema for entity summarization: one `attributes` map of string lists.

    Returns:
        Schema: {attributes: map<string -> list<string>>}
    """
    attributes = map_of(
        list_of(string_node()),
        description="Keyed by attribute, with a list of sufficient details about the attribute.",
    )
    return Schema("entity", object_of([("attributes", attributes)]))


BOOK_FIELDS = ("characters", "events", "background", "motivations", "objectives", "other")


def book_schema():
    """
    Schema for book summarization: six maps of element name to short explanations.

    Returns:
        Schema: Root object with the six BOOK_FIELDS, in order
    """
    fields = [
        (name, map_of(list_of(string_node()), description=f"Keyed by name, with short explanations of the {name}."))
        for name in BOOK_FIELDS
    ]
    return Schema("book", object_of(fields))


#####################################################
# VALIDATION
#####################################################

def _check(node, value, segments, out, partial):
    if node.kind is NodeKind.STRING:
        if not isinstance(value, str):
            out.append(Violation(segments, ViolationReason.LEAF_TYPE_MISMATCH, "expected a string"))
        return

    if node.kind is NodeKind.LIST:
        if isinstance(value, str):
            out.append(Violation(segments, ViolationReason.LEAF_TYPE_MISMATCH, "expected a list, got a string"))
            return
        if not isinstance(value, list):
            out.append(Violation(segments, ViolationReason.NON_LIST_VALUE, f"got {type(value).__name__}"))
            return
        for element in value:
            if node.element_type.kind is NodeKind.STRING:
                if not isinstance(element, str):
                    out.append(Violation(segments, ViolationReason.NON_STRING_ELEMENT, repr(element)))
            else:
                _check(node.element_type, element, segments, out, partial)
        return

    if not isinstance(value, dict):
        out.append(Violation(segments, ViolationReason.LEAF_TYPE_MISMATCH, f"expected a {node.kind.value}"))
        return

    if node.kind is NodeKind.MAP:
        for key, child in value.items():
            if not isinstance(key, str) or not key:
                out.append(Violation(segments, ViolationReason.NON_STRING_KEY, repr(key)))
                continue
            _check(node.value_type, child, segments + (key,), out, partial)
        return

    for key, child in value.items():
        field = node.field(key) if isinstance(key, str) else None
        if field is None:
            out.append(Violation(segments + (str(key),), ViolationReason.UNKNOWN_FIELD))
            continue
        _check(field, child, segments + (key,), out, partial)
    if not partial:
        for name in node.field_names:
            if name not in value:
                out.append(Violation(segments + (name,), ViolationReason.MISSING_FIELD))


def validate_value(node, value, segments=(), partial=False):
    """
    Validates a subtree against the node that governs it.

    Args:
        node (SchemaNode): Governing node
        value: Candidate value
        segments (tuple): Location of the value, used in violation paths
        partial (bool): Allow objects with unset fields (partial adds)

    Returns:
        ValidationReport: Every violation found
    """
    out = []
    _check(node, value, tuple(segments), out, partial)
    return ValidationReport(tuple(out))


def validate(schema, doc):
    """
    Validates a summary document against a schema without modifying it.

    Args:
        schema (Schema): Required shape
        doc: SummaryDoc candidate

    Returns:
        ValidationReport: valid exactly when no violations were found
    """
    return validate_value(schema.root, doc)


def node_at(schema, path):
    """
    Finds the schema node governing the value at a path.

    Map segments consume one arbitrary key; object segments must name a field.

    Args:
        schema (Schema): Schema to walk
        path (JsonPath): Parsed path

    Returns:
        SchemaNode or None: None when the path leaves the schema
    """
    node = schema.root
    for segment in path.segments:
        if node.kind is NodeKind.OBJECT:
            node = node.field(segment)
            if node is None:
                return None
        elif node.kind is NodeKind.MAP:
            node = node.value_type
        else:
            return None
    return node


#####################################################
# CONSTRUCTION AND REPLY REPAIR
#####################################################

def empty_value(node):
    if node.kind is NodeKind.OBJECT:
        return {name: empty_value(child) for name, child in node.fields}
    if node.kind is NodeKind.MAP:
        return {}
    if node.kind is NodeKind.LIST:
        return []
    return ""


def empty_doc(schema):
    """Returns the minimal conforming document (all fields present, all containers empty)."""
    return empty_value(schema.root)


def normalize_reply(schema, doc):
    """
    Repairs the envelope of an LLM reply without touching its values.

    A flat attribute table is wrapped under the root's only map field when every
    entry already conforms to that map's value type, and absent top-level fields
    are filled with their empty instance.

    Args:
        schema (Schema): Target schema
        doc: Parsed reply

    Returns:
        The repaired document (a new dict when changes were made)
    """
    if not isinstance(doc, dict):
        return doc
    root = schema.root
    if len(root.fields) == 1:
        name, only = root.fields[0]
        if only.kind is NodeKind.MAP and name not in doc and doc:
            if all(
                isinstance(k, str) and k and validate_value(only.value_type, v).valid
                for k, v in doc.items()
            ):
                logger.debug("Wrapping flat reply under '%s'", name)
                doc = {name: dict(doc)}
    missing = [name for name in root.field_names if name not in doc]
    if missing:
        doc = dict(doc)
        for name in missing:
            doc[name] = empty_value(root.field(name))
    return doc


def _type_expr(node, name_hint, classes):
    if node.kind is NodeKind.STRING:
        return "str"
    if node.kind is NodeKind.LIST:
        return f"list[{_type_expr(node.element_type, name_hint, classes)}]"
    if node.kind is NodeKind.MAP:
        return f"dict[str, {_type_expr(node.value_type, name_hint, classes)}]"
    class_name = "".join(part.capitalize() for part in name_hint.replace("-", "_").split("_") if part)
    classes.append(_class_block(class_name, node, classes))
    return class_name


def _class_block(class_name, node, classes):
    lines = [f"class {class_name}(TypedDict):"]
    for name, child in node.fields:
        line = f"  {name}: {_type_expr(child, name, classes)}"
        if child.description:
            line = f"{line}  # {child.description}"
        lines.append(line)
    return "\n".join(lines)


def class_text(schema):
    """
    Renders the schema as the TypedDict class block used in the CoK prompt.

    Args:
        schema (Schema): Schema to describe

    Returns:
        str: Nested object classes first, `Summary` last
    """
    classes = []
    summary = _class_block("Summary", schema.root, classes)
    return "\n\n".join(classes + [summary])


#####################################################
# DECLARATIVE SCHEMA FILES
#####################################################

SCHEMA_FILE_FORMAT = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["name", "root"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "root": {"$ref": "#/definitions/node"},
    },
    "definitions": {
        "node": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": [k.value for k in NodeKind]},
                "description": {"type": "string"},
                "fields": {
                    "type": "object",
                    "additionalProperties": {"$ref": "#/definitions/node"},
                },
                "value_type": {"$ref": "#/definitions/node"},
                "element_type": {"$ref": "#/definitions/node"},
            },
            "additionalProperties": False,
        }
    },
}


def _node_from_dict(obj):
    kind = NodeKind(obj["kind"])
    description = obj.get("description", "")
    if kind is NodeKind.OBJECT:
        fields = [(name, _node_from_dict(child)) for name, child in obj.get("fields", {}).items()]
        return object_of(fields, description)
    if kind is NodeKind.MAP:
        if "value_type" not in obj:
            raise SchemaError("Map nodes need a value_type")
        return map_of(_node_from_dict(obj["value_type"]), description)
    if kind is NodeKind.LIST:
        if "element_type" not in obj:
            raise SchemaError("List nodes need an element_type")
        return list_of(_node_from_dict(obj["element_type"]), description)
    return string_node(description)


def schema_from_dict(obj):
    """
    Builds a Schema from its declarative JSON form.

    Args:
        obj (dict): {"name": ..., "root": {"kind": "object", "fields": {...}}}

    Returns:
        Schema: The parsed schema

    Raises:
        SchemaError: When the document breaks the schema-file format or node rules
    """
    try:
        jsonschema.validate(obj, SCHEMA_FILE_FORMAT)
    except jsonschema.ValidationError as exc:
        location = "/".join(str(p) for p in exc.absolute_path) or "<document>"
        raise SchemaError(f"Invalid schema file at {location}: {exc.message}") from None
    return Schema(obj["name"], _node_from_dict(obj["root"]))


def _node_to_dict(node):
    out = {"kind": node.kind.value}
    if node.description:
        out["description"] = node.description
    if node.kind is NodeKind.OBJECT:
        out["fields"] = {name: _node_to_dict(child) for name, child in node.fields}
    elif node.kind is NodeKind.MAP:
        out["value_type"] = _node_to_dict(node.value_type)
    elif node.kind is NodeKind.LIST:
        out["element_type"] = _node_to_dict(node.element_type)
    return out


def schema_to_dict(schema):
    return {"name": schema.name, "root": _node_to_dict(schema.root)}


BUILTIN_SCHEMAS = {"entity": entity_schema, "book": book_schema}


def load_schema(ref):
    """
    Resolves a schema reference given on the command line.

    Args:
        ref (str): "entity", "book", or a path to a schema JSON file

    Returns:
        Schema: The resolved schema
    """
    if ref in BUILTIN_SCHEMAS:
        return BUILTIN_SCHEMAS[ref]()
    path = Path(ref)
    if not path.is_file():
        raise SchemaError(f"Schema '{ref}' is neither built in nor an existing file")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"Schema file {path} is not valid JSON: {exc}") from None
    return schema_from_dict(obj)
