import json

import numpy as np
import pytest

from src.errors import BudgetUnreachableError, ConfigError, MergeError, SchemaError
from src.models.memory import (
    ByteTokenizer,
    CompressionPolicy,
    FallbackMode,
    StructuredMemory,
    Tokenizer,
    build_tokenizer,
    chunk_document,
    count_tokens,
    doc_tokens,
    enforce_budget,
    enforce_text_budget,
    exact_dedup,
    programmatic_merge,
    serialize_doc,
    truncate_values,
)
from src.models.schema import book_schema, empty_doc, entity_schema, validate

WORDS = ["pool", "lighthouse", "keeper", "storm", "breakfast", "quiet", "view", "staff", "é", "naïve", "harbour"]


class CharTokenizer(Tokenizer):
    name = "chars"

    def count(self, text):
        return len(text)


def test_byte_tokenizer_rounds_up():
    tokenizer = ByteTokenizer()
    assert tokenizer.count("") == 0
    assert tokenizer.count("abcd") == 1
    assert tokenizer.count("abcde") == 2
    assert tokenizer.count("é") == 1
    assert tokenizer.count("ééé") == 2


def test_count_tokens_uses_the_byte_rule():
    tokenizer = ByteTokenizer()
    assert count_tokens(tokenizer, "") == 0
    assert count_tokens(tokenizer, "abcd") == 1
    assert count_tokens(tokenizer, "nine byte") == 3
    assert doc_tokens(tokenizer, {"a": []}) == count_tokens(tokenizer, '{"a":[]}')


def test_unknown_tokenizer():
    with pytest.raises(ConfigError):
        build_tokenizer("words")


def test_budget_counts_use_compact_json():
    doc = {"attributes": {"A": ["x"]}}
    assert serialize_doc(doc) == '{"attributes":{"A":["x"]}}'
    assert doc_tokens(CharTokenizer(), doc) == len('{"attributes":{"A":["x"]}}')


#####################################################
# CHUNKING
#####################################################

def _random_text(rng, words):
    parts = []
    for _ in range(words):
        parts.append(str(rng.choice(WORDS)))
        parts.append(str(rng.choice([" ", " ", " ", "\n", "\n\n", "  "])))
    return "".join(parts)


def test_chunks_rebuild_the_text_and_respect_the_limit():
    rng = np.random.default_rng(11)
    tokenizer = ByteTokenizer()
    for _ in range(110):
        text = _random_text(rng, int(rng.integers(1, 4000)))
        chunks = chunk_document(tokenizer, text, 2000)
        assert "".join(c.text for c in chunks) == text
        assert all(c.token_count == tokenizer.count(c.text) <= 2000 for c in chunks)
        assert [c.index for c in chunks] == list(range(len(chunks)))
        assert len(chunks) >= -(-tokenizer.count(text) // 2000)


def test_chunks_are_greedy():
    text = "aaaa bbbb cccc dddd "
    chunks = chunk_document(CharTokenizer(), text, 10)
    assert [c.text for c in chunks] == ["aaaa bbbb ", "cccc dddd "]


def test_oversized_unit_is_split_by_characters():
    text = "x" * 50 + " tail"
    chunks = chunk_document(CharTokenizer(), text, 20)
    assert "".join(c.text for c in chunks) == text
    assert all(c.token_count <= 20 for c in chunks)
    assert chunks[0].text == "x" * 20


def test_small_text_is_one_chunk():
    chunks = chunk_document(ByteTokenizer(), "Mara kept the lighthouse.", 2000)
    assert len(chunks) == 1


def test_chunk_edge_cases():
    assert chunk_document(ByteTokenizer(), "", 10) == []
    with pytest.raises(ConfigError):
        chunk_document(ByteTokenizer(), "text", 0)


#####################################################
# MERGE
#####################################################

def _random_entity(rng):
    keys = rng.choice(["A", "B", "C", "D", "E"], size=int(rng.integers(0, 5)), replace=False)
    return {"attributes": {str(k): [str(v) for v in rng.choice(WORDS, size=int(rng.integers(0, 4)))] for k in keys}}


def test_merge_algebra():
    rng = np.random.default_rng(5)
    schema = entity_schema()
    empty = empty_doc(schema)
    for _ in range(600):
        a, b, c = _random_entity(rng), _random_entity(rng), _random_entity(rng)
        ab = programmatic_merge(a, b, schema)

        assert programmatic_merge(ab, c, schema) == programmatic_merge(a, programmatic_merge(b, c), schema)
        assert programmatic_merge(empty, a) == a
        assert programmatic_merge(a, empty) == a
        assert set(ab["attributes"]) == set(a["attributes"]) | set(b["attributes"])
        for key, values in ab["attributes"].items():
            left, right = a["attributes"].get(key, []), b["attributes"].get(key, [])
            assert values == left + right
        assert validate(schema, ab).valid

        deduped = exact_dedup(ab)
        assert exact_dedup(deduped) == deduped
        for key, values in deduped["attributes"].items():
            assert len(values) == len(set(values))
            assert set(values) == set(ab["attributes"][key])


def test_merge_keeps_first_string_leaf():
    assert programmatic_merge({"verdict": "good"}, {"verdict": "bad"}) == {"verdict": "good"}
    assert programmatic_merge({"verdict": ""}, {"verdict": "bad"}) == {"verdict": "bad"}


def test_merge_rejects_mismatched_shapes():
    with pytest.raises(MergeError):
        programmatic_merge({"attributes": {"A": ["x"]}}, {"attributes": {"A": "x"}})
    with pytest.raises(MergeError):
        programmatic_merge({"attributes": {}}, {"attributes": {"A": "x"}}, entity_schema())


#####################################################
# MEMORY AND BUDGET
#####################################################

def test_memory_must_match_its_schema():
    with pytest.raises(SchemaError):
        StructuredMemory({"attributes": {"A": "x"}}, entity_schema())
    memory = StructuredMemory.empty(entity_schema(), 100)
    assert memory.turn == 0
    rewritten = memory.with_doc({"attributes": {"A": ["x"]}})
    assert rewritten.turn == 0
    assert rewritten.token_budget == 100
    with pytest.raises(ValueError):
        StructuredMemory(empty_doc(entity_schema()), entity_schema(), -1)


def test_policy_validation():
    with pytest.raises(ConfigError):
        CompressionPolicy(0)
    with pytest.raises(ConfigError):
        CompressionPolicy(10, max_retries=-1)


def test_truncation_pops_from_the_longest_list():
    schema = entity_schema()
    doc = {"attributes": {"A": ["a1", "a2", "a3"], "B": ["b1"]}}
    expected = {"attributes": {"A": ["a1", "a2"], "B": ["b1"]}}
    tokenizer = CharTokenizer()
    assert truncate_values(doc, schema, tokenizer, len(serialize_doc(expected))) == expected


def test_truncation_then_drops_emptied_entries():
    schema = entity_schema()
    doc = {"attributes": {"A": ["a1"], "B": ["b1"]}}
    result = truncate_values(doc, schema, CharTokenizer(), len('{"attributes":{"A":[]}}'))
    assert result == {"attributes": {"A": []}}


def test_truncation_of_an_unreachable_budget():
    with pytest.raises(BudgetUnreachableError):
        truncate_values({"attributes": {}}, entity_schema(), CharTokenizer(), 5)


def _big_entity(rng, budget):
    attributes = {}
    index = 0
    while doc_tokens(ByteTokenizer(), {"attributes": attributes}) <= budget * 1.5:
        key = f"{rng.choice(WORDS)} {index}"
        attributes[key] = [" ".join(str(w) for w in rng.choice(WORDS, size=int(rng.integers(1, 8)))) for _ in range(int(rng.integers(1, 5)))]
        index += 1
    return {"attributes": attributes}


@pytest.mark.parametrize("budget", [200, 300, 1000])
def test_budget_holds_against_unhelpful_replies(budget, sequential_llm):
    rng = np.random.default_rng(budget)
    tokenizer = ByteTokenizer()
    schema = entity_schema()
    for case in range(100):
        doc = _big_entity(rng, budget)
        oversized = json.dumps(doc)
        small = json.dumps({"attributes": dict(list(doc["attributes"].items())[:1])})
        script = [
            ["this is not json", oversized, oversized],
            [oversized, "{broken", oversized],
            ['{"attributes": {"A": "x"}}'],
            [oversized, oversized, small],
        ][case % 4]
        backend = sequential_llm(script)
        memory = StructuredMemory(doc, schema, 3, budget)

        compressed = enforce_budget(memory, backend, tokenizer, CompressionPolicy(budget, 3))

        assert compressed.tokens(tokenizer) <= budget
        assert validate(schema, compressed.doc).valid
        assert set(compressed.doc["attributes"]) <= set(doc["attributes"])
        assert len(backend.requests) == 3
        if case % 4 == 3:
            assert compressed.doc == json.loads(small)


def test_retry_prompts_report_the_previous_size(sequential_llm):
    budget = 50
    doc = _big_entity(np.random.default_rng(1), budget)
    backend = sequential_llm([json.dumps(doc)])
    enforce_budget(StructuredMemory(doc, entity_schema(), 2, budget), backend, ByteTokenizer(), CompressionPolicy(budget, 2))
    first, second = backend.requests
    assert "previous compressed summary" not in first.prompt
    assert f"used {doc_tokens(ByteTokenizer(), doc)} tokens" in second.prompt
    assert {r.template_id for r in backend.requests} == {"compress"}
    assert {r.turn for r in backend.requests} == {2}


def test_memory_within_budget_is_untouched(sequential_llm):
    backend = sequential_llm(["unused"])
    memory = StructuredMemory({"attributes": {"A": ["x"]}}, entity_schema(), 1, 100)
    assert enforce_budget(memory, backend, ByteTokenizer(), CompressionPolicy(100)) is memory
    assert backend.requests == []


def test_fail_fallback_raises(sequential_llm):
    budget = 40
    doc = _big_entity(np.random.default_rng(3), budget)
    backend = sequential_llm([json.dumps(doc)])
    policy = CompressionPolicy(budget, 2, FallbackMode.FAIL)
    with pytest.raises(BudgetUnreachableError):
        enforce_budget(StructuredMemory(doc, entity_schema(), 0, budget), backend, ByteTokenizer(), policy)
    assert len(backend.requests) == 2


def test_budget_below_the_empty_summary(sequential_llm):
    doc = empty_doc(book_schema())
    doc["events"]["storm"] = ["the ship breaks on the rocks"]
    with pytest.raises(BudgetUnreachableError):
        enforce_budget(StructuredMemory(doc, book_schema()), sequential_llm(["{}"]), ByteTokenizer(), CompressionPolicy(5))


def test_text_budget_falls_back_to_a_word_prefix(sequential_llm):
    text = " ".join(["The keeper trimmed the wick before the fog came in."] * 20)
    backend = sequential_llm([text])
    result = enforce_text_budget(text, backend, ByteTokenizer(), CompressionPolicy(30, 2), turn=4)
    assert ByteTokenizer().count(result) <= 30
    assert text.startswith(result)
    assert result == result.rstrip()
    assert [r.turn for r in backend.requests] == [4, 4]


def test_text_budget_accepts_a_short_reply(sequential_llm):
    text = "word " * 200
    backend = sequential_llm(["A short summary."])
    assert enforce_text_budget(text, backend, ByteTokenizer(), CompressionPolicy(30)) == "A short summary."
