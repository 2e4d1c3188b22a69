"""
Run and application configuration.
"""

import os
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.errors import ConfigError
from src.llm.backends import AUTH_TOKEN_ENV, DEFAULT_TEMPERATURE, ENDPOINT_ENV, build_backend
from src.models.memory import CompressionPolicy, FallbackMode, build_tokenizer
from src.models.schema import Schema

BOOK_CHUNK_LIMIT = 2000
BOOK_TOKEN_BUDGET = 1000


class Strategy(str, Enum):
    GO_TEXT = "go_text"
    GO_JSON = "go_json"
    GU_TEXT = "gu_text"
    GU_JSON = "gu_json"
    GM_JSON = "gm_json"
    COK_JSON = "cok_json"

    @property
    def output_format(self):
        return OutputFormat(self.value.split("_")[1])

    @property
    def family(self):
        return self.value.split("_")[0]


class OutputFormat(str, Enum):
    JSON = "json"
    TEXT = "text"


class Task(str, Enum):
    ENTITY = "entity"
    BOOK = "book"


class DedupMode(str, Enum):
    PER_TURN = "per-turn"
    FINAL = "final"


class Matcher(str, Enum):
    EXACT = "exact"
    FUZZY = "fuzzy"
    LLM = "llm"


def parse_strategies(text):
    """
    Args:
        text (str): "all" or a comma-separated list such as "gu_json,cok_json"

    Returns:
        list[Strategy]: Strategies in the given order (enum order for "all")
    """
    if text.strip() == "all":
        return list(Strategy)
    try:
        return [Strategy(name.strip()) for name in text.split(",") if name.strip()]
    except ValueError as exc:
        raise ConfigError(f"Unknown strategy in '{text}': {exc}") from None


class RunConfig(BaseModel):
    """Everything one pipeline run needs besides its documents and backend."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    strategy: Strategy
    summary_schema: Any
    task: Task = Task.ENTITY
    temperature: float = Field(DEFAULT_TEMPERATURE, ge=0.0, le=2.0)
    token_budget: Optional[int] = Field(None, ge=1)
    chunk_limit: Optional[int] = Field(None, ge=1)
    max_retries: int = Field(3, ge=0)
    fallback: FallbackMode = FallbackMode.TRUNCATE_VALUES
    gm_dedup: DedupMode = DedupMode.PER_TURN
    final_format: Optional[OutputFormat] = None
    parse_retries: int = Field(1, ge=0)

    @field_validator("summary_schema")
    @classmethod
    def _is_schema(cls, value):
        if not isinstance(value, Schema):
            raise ValueError(f"summary_schema must be a Schema, got {type(value).__name__}")
        return value

    @model_validator(mode="before")
    @classmethod
    def _book_defaults(cls, data):
        if isinstance(data, dict) and Task(data.get("task", Task.ENTITY)) is Task.BOOK:
            data = dict(data)
            if data.get("chunk_limit") is None:
                data["chunk_limit"] = BOOK_CHUNK_LIMIT
            if data.get("token_budget") is None:
                data["token_budget"] = BOOK_TOKEN_BUDGET
        return data

    @model_validator(mode="after")
    def _check_formats(self):
        if self.output_format is OutputFormat.TEXT and self.final_format is OutputFormat.JSON:
            raise ValueError(f"{self.strategy.value} keeps text memory and cannot emit a JSON final summary")
        return self

    @property
    def output_format(self):
        return self.strategy.output_format

    @property
    def summary_format(self):
        return self.final_format or self.output_format

    @property
    def policy(self):
        if self.token_budget is None:
            return None
        return CompressionPolicy(self.token_budget, self.max_retries, self.fallback)

    def echo(self):
        """JSON-ready copy for run files."""
        out = self.model_dump(mode="json", exclude={"summary_schema"})
        out["schema"] = self.summary_schema.name
        return out


def build_run_config(**values):
    try:
        return RunConfig(**values)
    except ValidationError as exc:
        raise ConfigError(f"Invalid run configuration: {exc}") from None


class AppConfig(BaseModel):
    """Process-level settings collected from flags and the environment."""

    model_config = ConfigDict(frozen=True)

    backend: Optional[str] = None
    endpoint: Optional[str] = None
    auth_token: Optional[str] = None
    evaluator: Optional[str] = None
    tokenizer: str = "bytes"
    matcher: Matcher = Matcher.EXACT
    workers: int = Field(1, ge=1)
    deterministic: bool = False
    out: Optional[Path] = None
    csv: Optional[Path] = None
    plot: Optional[Path] = None
    timeout: float = Field(120.0, gt=0)

    @field_validator("tokenizer")
    @classmethod
    def _known_tokenizer(cls, value):
        if value not in ("bytes", "tiktoken"):
            raise ValueError(f"tokenizer must be 'bytes' or 'tiktoken', got {value!r}")
        return value

    @classmethod
    def from_env(cls, **values):
        values.setdefault("endpoint", None)
        values.setdefault("auth_token", None)
        values["endpoint"] = values["endpoint"] or os.environ.get(ENDPOINT_ENV)
        values["auth_token"] = values["auth_token"] or os.environ.get(AUTH_TOKEN_ENV)
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ConfigError(f"Invalid application configuration: {exc}") from None

    def make_backend(self, spec=None):
        spec = spec or self.backend
        if not spec:
            raise ConfigError("No backend configured (use --backend)")
        return build_backend(spec, self.endpoint, self.auth_token, self.timeout)

    def make_evaluator(self):
        return self.make_backend(self.evaluator) if self.evaluator else None

    def make_tokenizer(self):
        return build_tokenizer(self.tokenizer)
