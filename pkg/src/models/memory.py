"""
Structured memory: token counting, chunking, Generate-Merge merging and the
limited-token compression loop.
"""

import copy
import json
import logging
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import Enum

from src.errors import (
    BudgetUnreachableError,
    ConfigError,
    MergeError,
    ReplyParseError,
    SchemaError,
)
from src.llm.backends import DEFAULT_TEMPERATURE, LlmRequest, complete
from src.llm.parsing import parse_summary
from src.llm.prompts import PromptId, render_prompt
from src.models.schema import NodeKind, empty_doc, validate

logger = logging.getLogger(__name__)

# one unit = a run of non-space characters plus the whitespace after it
_UNIT_BOUNDARY = re.compile(r"(?<=\s)(?=\S)")


#####################################################
# TOKENIZERS
#####################################################

class Tokenizer(ABC):
    name = "abstract"

    @abstractmethod
    def count(self, text):
        """Number of tokens in `text`; 0 for the empty string."""


class ByteTokenizer(Tokenizer):
    """ceiling(utf-8 bytes / 4). Hermetic stand-in for a model tokenizer."""

    name = "bytes"

    def count(self, text):
        return -(-len(text.encode("utf-8")) // 4)


class TiktokenTokenizer(Tokenizer):
    name = "tiktoken"

    def __init__(self, encoding_name="cl100k_base"):
        try:
            import tiktoken
        except ImportError:
            raise ConfigError("The tiktoken tokenizer needs the 'tiktoken' package installed") from None
        self.encoding_name = encoding_name
        self._encoding = tiktoken.get_encoding(encoding_name)

    def count(self, text):
        return len(self._encoding.encode(text, disallowed_special=()))


TOKENIZERS = {"bytes": ByteTokenizer, "tiktoken": TiktokenTokenizer}


def build_tokenizer(name="bytes"):
    if name not in TOKENIZERS:
        raise ConfigError(f"Unknown tokenizer '{name}', expected one of {sorted(TOKENIZERS)}")
    return TOKENIZERS[name]()


def count_tokens(tokenizer, text):
    """Token count of a text memory; JSON memories go through doc_tokens."""
    return tokenizer.count(text)


def serialize_doc(doc):
    """Compact JSON used for every budget count."""
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def format_doc(doc):
    """Indented JSON embedded in prompts."""
    return json.dumps(doc, indent=2, ensure_ascii=False)


def doc_tokens(tokenizer, doc):
    return count_tokens(tokenizer, serialize_doc(doc))


def _largest_fitting(upper, fits):
    """
    Largest k in [0, upper] with fits(k), for a monotone predicate where fits(0) holds.

    Gallops up from 1, then bisects the last bracket.
    """
    low, step = 0, 1
    while low + step <= upper and fits(low + step):
        low += step
        step *= 2
    high = min(low + step, upper + 1)
    while high - low > 1:
        middle = (low + high) // 2
        if fits(middle):
            low = middle
        else:
            high = middle
    return low


#####################################################
# CHUNKING
#####################################################

@dataclass(frozen=True)
class Chunk:
    index: int
    text: str
    token_count: int


def _hard_split(tokenizer, unit, limit):
    pieces = []
    while unit:
        size = _largest_fitting(len(unit), lambda k: tokenizer.count(unit[:k]) <= limit)
        if size == 0:
            logger.warning("A single character exceeds the chunk limit of %d tokens", limit)
            size = 1
        pieces.append(unit[:size])
        unit = unit[size:]
    return pieces


def chunk_document(tokenizer, text, limit):
    """
    Greedily packs whitespace-delimited units into chunks of at most `limit` tokens.

    A unit that alone exceeds the limit is split by characters. Joining the
    chunk texts in order gives back `text` exactly.

    Args:
        tokenizer (Tokenizer): Counter used for the limit
        text (str): Source text, e.g. a whole book
        limit (int): Maximum tokens per chunk

    Returns:
        list[Chunk]: Chunks in source order; empty for empty text
    """
    if limit < 1:
        raise ConfigError(f"Chunk limit must be at least 1, got {limit}")
    if not text:
        return []
    units = _UNIT_BOUNDARY.split(text)
    pieces = []
    start = 0
    while start < len(units):
        remaining = len(units) - start
        taken = _largest_fitting(remaining, lambda k: tokenizer.count("".join(units[start:start + k])) <= limit)
        if taken == 0:
            pieces.extend(_hard_split(tokenizer, units[start], limit))
            start += 1
            continue
        pieces.append("".join(units[start:start + taken]))
        start += taken
    chunks = [Chunk(i, piece, tokenizer.count(piece)) for i, piece in enumerate(pieces)]
    logger.info("Split %d characters into %d chunks (limit %d tokens)", len(text), len(chunks), limit)
    return chunks


#####################################################
# MERGE AND DEDUP
#####################################################

def _merge(a, b, segments):
    if isinstance(a, dict) and isinstance(b, dict):
        merged = copy.deepcopy(a)
        for key, value in b.items():
            merged[key] = _merge(merged[key], value, segments + (key,)) if key in merged else copy.deepcopy(value)
        return merged
    if isinstance(a, list) and isinstance(b, list):
        return copy.deepcopy(a) + copy.deepcopy(b)
    if isinstance(a, str) and isinstance(b, str):
        return a if a else b
    raise MergeError(f"Cannot merge {type(a).__name__} with {type(b).__name__} at {'.'.join(segments) or '$'}")


def programmatic_merge(a, b, schema=None):
    """
    Key-union merge used by Generate-Merge.

    Map keys are unioned recursively, value lists concatenated with `a` first and
    duplicates kept. A string leaf keeps `a` unless it is empty.

    Args:
        a: Current memory
        b: Summary of the new document
        schema (Schema): When given, both inputs must validate against it

    Returns:
        A new merged document

    Raises:
        MergeError: Mismatched shapes or an input that does not validate
    """
    if schema is not None:
        for label, doc in (("left", a), ("right", b)):
            report = validate(schema, doc)
            if not report.valid:
                raise MergeError(f"The {label} summary does not match schema '{schema.name}': {report.describe()}")
    return _merge(a, b, ())


def exact_dedup(doc):
    """Collapses verbatim-equal list values to their first occurrence; keys are untouched."""
    if isinstance(doc, dict):
        return {key: exact_dedup(value) for key, value in doc.items()}
    if isinstance(doc, list):
        kept = []
        for item in doc:
            item = exact_dedup(item)
            if item not in kept:
                kept.append(item)
        return kept
    return doc


#####################################################
# MEMORY AND BUDGET
#####################################################

class FallbackMode(str, Enum):
    TRUNCATE_VALUES = "truncate-values"
    FAIL = "fail"


@dataclass(frozen=True)
class CompressionPolicy:
    budget: int
    max_retries: int = 3
    fallback: FallbackMode = FallbackMode.TRUNCATE_VALUES

    def __post_init__(self):
        object.__setattr__(self, "fallback", FallbackMode(self.fallback))
        if self.budget < 1:
            raise ConfigError(f"Token budget must be positive, got {self.budget}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must not be negative, got {self.max_retries}")


@dataclass(frozen=True)
class StructuredMemory:
    """
    A schema-valid summary plus its optional token budget.

    `turn` is the 0-based index of the turn that wrote `doc` (0 for an empty
    memory); compression requests are keyed by it.
    """

    doc: dict
    schema: object
    turn: int = 0
    token_budget: int = None

    def __post_init__(self):
        if self.turn < 0:
            raise ValueError("turn must not be negative")
        report = validate(self.schema, self.doc)
        if not report.valid:
            raise SchemaError(f"Memory does not match schema '{self.schema.name}': {report.describe()}")

    @classmethod
    def empty(cls, schema, token_budget=None):
        return cls(empty_doc(schema), schema, 0, token_budget)

    def with_doc(self, doc):
        return replace(self, doc=doc)

    def tokens(self, tokenizer):
        return doc_tokens(tokenizer, self.doc)


def _is_empty(value):
    if isinstance(value, dict):
        return all(_is_empty(v) for v in value.values())
    return len(value) == 0


def _slots(node, value):
    """Yields (schema node, parent kind, container, key) for every child in document order."""
    if node.kind in (NodeKind.OBJECT, NodeKind.MAP):
        for key, child in value.items():
            child_node = node.field(key) if node.kind is NodeKind.OBJECT else node.value_type
            yield child_node, node.kind, value, key
            yield from _slots(child_node, child)
    elif node.kind is NodeKind.LIST and node.element_type.kind is not NodeKind.STRING:
        for index, child in enumerate(value):
            yield node.element_type, node.kind, value, index
            yield from _slots(node.element_type, child)


def _pop_longest_list(schema, doc):
    lists = [c[k] for node, _, c, k in _slots(schema.root, doc) if node.kind is NodeKind.LIST]
    longest = max(lists, key=len, default=[])
    if not longest:
        return False
    longest.pop()
    return True


def _drop_empty_map_entry(schema, doc):
    entries = [
        (c, k) for _, parent, c, k in _slots(schema.root, doc)
        if parent is NodeKind.MAP and _is_empty(c[k])
    ]
    if not entries:
        return False
    container, key = entries[-1]
    del container[key]
    return True


def _clear_string_leaf(schema, doc):
    leaves = [
        (c, k) for node, parent, c, k in _slots(schema.root, doc)
        if node.kind is NodeKind.STRING and parent is not NodeKind.LIST and c[k] != ""
    ]
    if not leaves:
        return False
    container, key = leaves[-1]
    container[key] = ""
    return True


def truncate_values(doc, schema, tokenizer, budget):
    """
    Deterministic fallback that shrinks a document until it fits the budget.

    Steps, each repeated until the document fits: pop the last value of the
    longest list (earliest in document order on ties); drop empty map entries
    from the end; clear string leaves from the end.

    Args:
        doc: Valid summary
        schema (Schema): Its schema
        tokenizer (Tokenizer): Counter for the budget
        budget (int): Maximum tokens of serialize_doc(result)

    Returns:
        A new schema-valid document of at most `budget` tokens

    Raises:
        BudgetUnreachableError: When even the empty document is too large
    """
    result = copy.deepcopy(doc)

    def fits():
        return doc_tokens(tokenizer, result) <= budget

    for step in (_pop_longest_list, _drop_empty_map_entry, _clear_string_leaf, _drop_empty_map_entry):
        while not fits() and step(schema, result):
            pass
        if fits():
            return result
    raise BudgetUnreachableError(
        f"Cannot fit schema '{schema.name}' into {budget} tokens; the emptied summary needs {doc_tokens(tokenizer, result)}"
    )


def _compress_bindings(policy, memory_text, output_format, attempt, previous_tokens):
    bindings = {"token_budget": policy.budget, "memory": memory_text, "output_format": output_format, "attempt": attempt}
    if previous_tokens is not None:
        bindings["previous_tokens"] = previous_tokens
    return bindings


def enforce_budget(memory, backend, tokenizer, policy, temperature=DEFAULT_TEMPERATURE):
    """
    Compresses memory with the LLM until it fits the budget.

    Up to `policy.max_retries` compression calls are made; each retry states the
    size of the previous reply. If none fits, the configured fallback applies.

    Args:
        memory (StructuredMemory): Memory to check
        backend (LlmBackend): Backend answering the compression prompt
        tokenizer (Tokenizer): Counter for the budget
        policy (CompressionPolicy): Budget K, retries and fallback
        temperature (float): Sampling temperature

    Returns:
        StructuredMemory: Unchanged when it already fits; otherwise schema-valid and within K

    Raises:
        BudgetUnreachableError: The empty summary exceeds K, or no reply fits and fallback is "fail"
    """
    used = memory.tokens(tokenizer)
    if used <= policy.budget:
        return memory
    floor = doc_tokens(tokenizer, empty_doc(memory.schema))
    if floor > policy.budget:
        raise BudgetUnreachableError(f"The empty '{memory.schema.name}' summary needs {floor} tokens, over the budget of {policy.budget}")

    logger.info("Memory at turn %d uses %d tokens, compressing to %d", memory.turn, used, policy.budget)
    previous = None
    for attempt in range(1, policy.max_retries + 1):
        prompt = render_prompt(
            PromptId.COMPRESS,
            _compress_bindings(policy, format_doc(memory.doc), "JSON", attempt, previous),
        )
        reply = complete(backend, LlmRequest(prompt, temperature, PromptId.COMPRESS, memory.turn))
        try:
            candidate = parse_summary(reply.text, memory.schema)
        except ReplyParseError as exc:
            logger.warning("Compression attempt %d returned an unusable reply: %s", attempt, exc)
            continue
        size = doc_tokens(tokenizer, candidate)
        if size <= policy.budget:
            return memory.with_doc(candidate)
        logger.warning("Compression attempt %d used %d tokens, over the budget of %d", attempt, size, policy.budget)
        previous = size

    if policy.fallback is FallbackMode.FAIL:
        raise BudgetUnreachableError(f"No compressed summary fit {policy.budget} tokens after {policy.max_retries} attempts")
    logger.warning("Falling back to value truncation at turn %d", memory.turn)
    return memory.with_doc(truncate_values(memory.doc, memory.schema, tokenizer, policy.budget))


def _truncate_text(tokenizer, text, budget):
    units = _UNIT_BOUNDARY.split(text)
    taken = _largest_fitting(len(units), lambda k: tokenizer.count("".join(units[:k]).rstrip()) <= budget)
    if taken:
        return "".join(units[:taken]).rstrip()
    first = units[0]
    return first[:_largest_fitting(len(first), lambda k: tokenizer.count(first[:k]) <= budget)]


def enforce_text_budget(text, backend, tokenizer, policy, turn=0, temperature=DEFAULT_TEMPERATURE):
    """
    Budget enforcement for text memory; the fallback drops trailing words.

    Args:
        text (str): Current text memory
        backend (LlmBackend): Backend answering the compression prompt
        tokenizer (Tokenizer): Counter for the budget
        policy (CompressionPolicy): Budget K, retries and fallback
        turn (int): Turn index used in the cassette key
        temperature (float): Sampling temperature

    Returns:
        str: Text of at most K tokens
    """
    if count_tokens(tokenizer, text) <= policy.budget:
        return text
    previous = None
    for attempt in range(1, policy.max_retries + 1):
        prompt = render_prompt(PromptId.COMPRESS, _compress_bindings(policy, text, "text", attempt, previous))
        candidate = complete(backend, LlmRequest(prompt, temperature, PromptId.COMPRESS, turn)).text.strip()
        size = count_tokens(tokenizer, candidate)
        if size <= policy.budget:
            return candidate
        logger.warning("Text compression attempt %d used %d tokens, over the budget of %d", attempt, size, policy.budget)
        previous = size
    if policy.fallback is FallbackMode.FAIL:
        raise BudgetUnreachableError(f"No compressed text fit {policy.budget} tokens after {policy.max_retries} attempts")
    logger.warning("Falling back to dropping trailing words at turn %d", turn)
    return _truncate_text(tokenizer, text, policy.budget)
