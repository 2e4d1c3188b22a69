import copy
import json

import numpy as np
import pytest

from src.errors import SchemaError
from src.models.jsonpath import JsonPath, parse_path
from src.models.schema import (
    BOOK_FIELDS,
    NodeKind,
    Schema,
    ViolationReason,
    book_schema,
    class_text,
    empty_doc,
    entity_schema,
    list_of,
    load_schema,
    map_of,
    node_at,
    normalize_reply,
    object_of,
    schema_from_dict,
    schema_to_dict,
    string_node,
    validate,
)


def _reasons(report):
    return [(v.path, v.reason) for v in report.violations]


def test_entity_summary_validates():
    doc = {"attributes": {"Amenities": ["two pools"], "Service": []}}
    assert validate(entity_schema(), doc).valid


def test_empty_docs_validate():
    assert validate(entity_schema(), empty_doc(entity_schema())).valid
    book = empty_doc(book_schema())
    assert list(book) == list(BOOK_FIELDS)
    assert validate(book_schema(), book).valid


@pytest.mark.parametrize("doc, path, reason", [
    ({"attributes": {"A": "x"}}, "$.'attributes'.'A'", ViolationReason.LEAF_TYPE_MISMATCH),
    ({"attributes": {"A": {"x": 1}}}, "$.'attributes'.'A'", ViolationReason.NON_LIST_VALUE),
    ({"attributes": {"A": ["x", 3]}}, "$.'attributes'.'A'", ViolationReason.NON_STRING_ELEMENT),
    ({"attributes": {"": ["x"]}}, "$.'attributes'", ViolationReason.NON_STRING_KEY),
    ({"attributes": {}, "extra": {}}, "$.'extra'", ViolationReason.UNKNOWN_FIELD),
    ({}, "$.'attributes'", ViolationReason.MISSING_FIELD),
])
def test_violations_name_path_and_reason(doc, path, reason):
    report = validate(entity_schema(), doc)
    assert not report.valid
    assert (path, reason) in _reasons(report)


def test_book_fields_are_required():
    doc = empty_doc(book_schema())
    del doc["other"]
    report = validate(book_schema(), doc)
    assert _reasons(report) == [("$.'other'", ViolationReason.MISSING_FIELD)]


def test_validate_does_not_modify_the_document():
    doc = {"attributes": {"A": ["x", 3]}}
    before = json.dumps(doc)
    validate(entity_schema(), doc)
    assert json.dumps(doc) == before


def test_node_rules_are_enforced():
    with pytest.raises(SchemaError):
        object_of([("a", string_node()), ("a", string_node())])
    with pytest.raises(SchemaError):
        schema_from_dict({"name": "bad", "root": {"kind": "map"}})
    with pytest.raises(SchemaError):
        schema_from_dict({"name": "bad", "root": {"kind": "string"}})


def test_node_at_walks_fields_and_map_keys():
    schema = entity_schema()
    assert node_at(schema, parse_path("$.attributes")).kind is NodeKind.MAP
    assert node_at(schema, parse_path("$.attributes.'Any key'")).is_string_list()
    assert node_at(schema, parse_path("$.unknown")) is None
    assert node_at(schema, parse_path("$.attributes.A.deeper")) is None


def test_flat_reply_is_wrapped_under_the_only_map_field():
    repaired = normalize_reply(entity_schema(), {"Amenities": ["two pools"]})
    assert repaired == {"attributes": {"Amenities": ["two pools"]}}


def test_wrapping_needs_every_entry_to_fit():
    reply = {"Amenities": ["two pools"], "Rating": 5}
    repaired = normalize_reply(entity_schema(), reply)
    assert repaired == {"Amenities": ["two pools"], "Rating": 5, "attributes": {}}
    assert not validate(entity_schema(), repaired).valid


def test_missing_book_fields_are_filled_empty():
    repaired = normalize_reply(book_schema(), {"events": {"storm": ["wreck"]}})
    assert list(repaired) == ["events"] + [f for f in BOOK_FIELDS if f != "events"]
    assert validate(book_schema(), repaired).valid


def test_class_text_describes_the_entity_schema():
    text = class_text(entity_schema())
    assert text.startswith("class Summary(TypedDict):")
    assert "  attributes: dict[str, list[str]]  # Keyed by attribute" in text


def test_class_text_puts_nested_classes_first():
    schema = schema_from_dict({
        "name": "nested",
        "root": {
            "kind": "object",
            "fields": {
                "profile": {"kind": "object", "fields": {"name": {"kind": "string"}}},
            },
        },
    })
    text = class_text(schema)
    assert text.index("class Profile(TypedDict):") < text.index("class Summary(TypedDict):")
    assert "  profile: Profile" in text


def test_schema_file_round_trip(fixtures_dir):
    schema = load_schema(str(fixtures_dir / "custom_schema.json"))
    assert schema.name == "restaurant"
    assert schema.root.field_names == ["dishes", "verdict"]
    assert schema_from_dict(schema_to_dict(schema)) == schema
    assert validate(schema, {"dishes": {"ramen": ["rich broth"]}, "verdict": "worth the queue"}).valid


def test_load_schema_builtins_and_unknown_reference():
    assert load_schema("entity") == entity_schema()
    assert load_schema("book") == book_schema()
    with pytest.raises(SchemaError):
        load_schema("no-such-schema.json")


def test_schema_file_with_unknown_kind(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"name": "bad", "root": {"kind": "tuple"}}))
    with pytest.raises(SchemaError):
        load_schema(str(path))


def test_nested_lists_of_objects_validate():
    schema = schema_from_dict({
        "name": "timeline",
        "root": {
            "kind": "object",
            "fields": {
                "scenes": {
                    "kind": "list",
                    "element_type": {"kind": "object", "fields": {"place": {"kind": "string"}}},
                }
            },
        },
    })
    assert validate(schema, {"scenes": [{"place": "lighthouse"}]}).valid
    assert not validate(schema, {"scenes": [{"place": 3}]}).valid


def test_builders_produce_expected_kinds():
    node = map_of(list_of(string_node()))
    assert node.kind is NodeKind.MAP
    assert node.value_type.is_string_list()


#####################################################
# RANDOMIZED PROPERTIES
#####################################################

WORDS = ["quiet", "rooftop pool", "Ann", "the storm", "it's fine", ""]
KEYS = ["Service", "Noise Level", "views from hotel", "a'b", "Room 2", "Ann"]
BAD_VALUES = [7, None, "text", ["ok", 3], {"unknown": []}, [{"x": "y"}]]


def _nested_schema():
    notes = map_of(list_of(string_node()))
    return Schema("nested", object_of([
        ("profile", object_of([("name", string_node()), ("tags", list_of(string_node()))])),
        ("rooms", map_of(map_of(list_of(string_node())))),
        ("scenes", list_of(object_of([("place", string_node()), ("notes", notes)]))),
    ]))


SCHEMAS = [entity_schema(), book_schema(), _nested_schema()]


def _conforming(rng, node):
    if node.kind is NodeKind.STRING:
        return str(rng.choice(WORDS))
    if node.kind is NodeKind.LIST:
        return [_conforming(rng, node.element_type) for _ in range(int(rng.integers(0, 3)))]
    if node.kind is NodeKind.MAP:
        keys = rng.choice(KEYS, size=int(rng.integers(0, 4)), replace=False)
        return {str(k): _conforming(rng, node.value_type) for k in keys}
    return {name: _conforming(rng, child) for name, child in node.fields}


def _map_entries(node, value, segments=()):
    """Segments of every map entry reachable without entering a list."""
    if not isinstance(value, dict) or node.kind not in (NodeKind.OBJECT, NodeKind.MAP):
        return []
    found = []
    for key, child in value.items():
        child_node = node.value_type if node.kind is NodeKind.MAP else node.field(key)
        if child_node is None:
            continue
        if node.kind is NodeKind.MAP:
            found.append(segments + (key,))
        found.extend(_map_entries(child_node, child, segments + (key,)))
    return found


def _parent_of(doc, segments):
    for segment in segments[:-1]:
        doc = doc[segment]
    return doc


@pytest.mark.parametrize("schema", SCHEMAS, ids=lambda s: s.name)
def test_generated_documents_validate(schema):
    rng = np.random.default_rng(7)
    for _ in range(300):
        doc = _conforming(rng, schema.root)
        report = validate(schema, doc)
        assert report.valid, report.describe()


@pytest.mark.parametrize("schema", SCHEMAS, ids=lambda s: s.name)
def test_removing_an_entry_removes_only_violations_under_it(schema):
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(200):
        doc = _conforming(rng, schema.root)
        entries = _map_entries(schema.root, doc)
        chosen = [entries[i] for i in rng.permutation(len(entries))[: int(rng.integers(0, 3))]]
        for segments in sorted(chosen, key=len, reverse=True):
            _parent_of(doc, segments)[segments[-1]] = copy.deepcopy(BAD_VALUES[int(rng.integers(0, len(BAD_VALUES)))])

        before = validate(schema, doc).violations
        for segments in _map_entries(schema.root, doc):
            trimmed = copy.deepcopy(doc)
            del _parent_of(trimmed, segments)[segments[-1]]
            expected = [v for v in before if v.segments[: len(segments)] != segments]
            assert list(validate(schema, trimmed).violations) == expected
            checked += 1
    assert checked > 100


@pytest.mark.parametrize("schema", SCHEMAS, ids=lambda s: s.name)
def test_string_list_nodes_hold_string_lists_in_valid_documents(schema):
    rng = np.random.default_rng(13)
    segment_pool = sorted({*KEYS, *BOOK_FIELDS, "attributes", "profile", "name", "tags", "rooms", "scenes"})
    for _ in range(300):
        doc = _conforming(rng, schema.root)
        assert validate(schema, doc).valid
        for _ in range(10):
            segments = tuple(str(s) for s in rng.choice(segment_pool, size=int(rng.integers(1, 4))))
            node = node_at(schema, JsonPath(segments))
            if node is None or not node.is_string_list():
                continue
            value = doc
            for segment in segments:
                if not isinstance(value, dict) or segment not in value:
                    value = None
                    break
                value = value[segment]
            assert value is None or (isinstance(value, list) and all(isinstance(v, str) for v in value))
