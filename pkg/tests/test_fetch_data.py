import json

import pytest

from src.data.fetch_data import (
    load_book_text,
    load_entity_record,
    load_entity_records,
    load_run_result,
    write_json,
)
from src.errors import DataError


def test_hotel_fixture(fixtures_dir):
    record = load_entity_record(fixtures_dir / "hotel0.json")
    assert record.entity == "HOTEL0"
    assert len(record.paragraphs) == len(record.gold_per_turn) == 7
    assert record.final_gold == record.gold_per_turn[-1]


def test_jsonl_dataset(fixtures_dir):
    records = load_entity_records(fixtures_dir / "synthetic_entities.jsonl")
    assert [r.entity for r in records] == ["HOTEL1", "CAFE2", "MUSEUM3"]


def test_json_array_dataset(tmp_path):
    path = tmp_path / "set.json"
    path.write_text(json.dumps([{"entity": "A", "paragraphs": ["p"]}, {"entity": "B", "paragraphs": ["q"]}], indent=2))
    assert len(load_entity_records(path)) == 2
    with pytest.raises(DataError):
        load_entity_record(path)


def test_gold_must_match_the_paragraphs(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"entity": "A", "paragraphs": ["p", "q"], "gold_per_turn": [{"A": ["x"]}]}))
    with pytest.raises(DataError) as info:
        load_entity_record(path)
    assert "'A'" in str(info.value)


@pytest.mark.parametrize("content", ["", "{not json", '{"entity": "A"}\n', '{"entity": "", "paragraphs": ["p"]}'])
def test_invalid_datasets(tmp_path, content):
    path = tmp_path / "bad.jsonl"
    path.write_text(content)
    with pytest.raises(DataError):
        load_entity_records(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_entity_records(tmp_path / "absent.jsonl")


def test_book_text(fixtures_dir, tmp_path):
    assert load_book_text(fixtures_dir / "book_sample.txt").startswith("Mara kept the lighthouse")
    empty = tmp_path / "empty.txt"
    empty.write_text("\n\n")
    with pytest.raises(DataError):
        load_book_text(empty)


def test_run_file_round_trip(tmp_path):
    document = {
        "config": {"task": "entity"},
        "strategy": "gu_json",
        "subject": "A",
        "turns": [{"turn": 0, "memory_snapshot": {"attributes": {}}, "memory_tokens": 5, "patch_outcome": None}],
        "final_summary": {"attributes": {}},
    }
    path = write_json(tmp_path / "runs" / "a.json", document)
    result, raw = load_run_result(path)
    assert raw == document
    assert result.turns[0].memory_tokens == 5
    assert result.subject == "A"


def test_run_file_without_turns(tmp_path):
    path = tmp_path / "run.json"
    path.write_text('{"strategy": "gu_json"}')
    with pytest.raises(DataError):
        load_run_result(path)
