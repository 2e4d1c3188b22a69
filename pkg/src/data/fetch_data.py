import json
import logging
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from src.errors import DataError
from src.pipeline.strategies import run_result_from_dict

logger = logging.getLogger(__name__)


class EntityStreamRecord(BaseModel):
    """One entity with its paragraph stream and optional gold summaries."""

    entity: str = Field(..., min_length=1)
    paragraphs: list[str] = Field(..., min_length=1)
    gold_per_turn: Optional[list[dict]] = None
    gold_final: Optional[dict] = None

    @model_validator(mode="after")
    def _gold_matches_paragraphs(self):
        if self.gold_per_turn is not None and len(self.gold_per_turn) != len(self.paragraphs):
            raise ValueError(
                f"gold_per_turn has {len(self.gold_per_turn)} entries for {len(self.paragraphs)} paragraphs"
            )
        return self

    @property
    def final_gold(self):
        """Gold for the complete stream: gold_final, else the last per-turn gold."""
        if self.gold_final is not None:
            return self.gold_final
        return self.gold_per_turn[-1] if self.gold_per_turn else None


def _read_text(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Input file not found: {path}")
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"Cannot read {path}: {exc}") from None


def _record(obj, where):
    try:
        return EntityStreamRecord.model_validate(obj)
    except ValidationError as exc:
        name = obj.get("entity", "<unnamed>") if isinstance(obj, dict) else "<not an object>"
        raise DataError(f"Invalid entity record '{name}' at {where}: {exc}") from None


def load_entity_records(path):
    """
    Loads entity stream records from a JSON-lines dataset or a JSON file.

    Args:
        path (str | Path): One record per line, or a JSON object / array of objects

    Returns:
        list[EntityStreamRecord]: Records in file order
    """
    text = _read_text(path)
    stripped = text.lstrip()
    if stripped.startswith("[") or (stripped.startswith("{") and _is_single_document(stripped)):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path} is not valid JSON: {exc}") from None
        items = obj if isinstance(obj, list) else [obj]
        records = [_record(item, f"{path}[{i}]") for i, item in enumerate(items)]
    else:
        records = []
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{number} is not valid JSON: {exc}") from None
            records.append(_record(obj, f"{path}:{number}"))
    if not records:
        raise DataError(f"No entity records in {path}")
    logger.info("Loaded %d entity records from %s", len(records), path)
    return records


def _is_single_document(text):
    try:
        json.loads(text)
    except json.JSONDecodeError:
        return False
    return True


def load_entity_record(path):
    """Loads a file holding exactly one entity record."""
    records = load_entity_records(path)
    if len(records) != 1:
        raise DataError(f"{path} holds {len(records)} records; summarize takes exactly one")
    return records[0]


def load_book_text(path):
    """
    Reads a book as plain text.

    Args:
        path (str | Path): UTF-8 text file

    Returns:
        str: The whole book
    """
    text = _read_text(path)
    if not text.strip():
        raise DataError(f"Book file {path} is empty")
    return text


def load_json(path):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None


def load_run_result(path):
    """
    Reads a run document written by `summarize`.

    Returns:
        tuple: (RunResult, the raw document with its config echo)
    """
    obj = load_json(path)
    if not isinstance(obj, dict):
        raise DataError(f"Run file {path} does not hold a JSON object")
    return run_result_from_dict(obj), obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path
