"""Shared fixtures: deterministic LLM stand-ins and the shipped synthetic data."""

import json
import re
from pathlib import Path

import pytest

from src.llm.backends import Cassette, LlmBackend, LlmResponse, RecorderBackend, ScriptedBackend
from src.llm.parsing import render_cok_response
from src.models.jsonpath import render_segments
from src.models.pathpatch import PatchSet

FIXTURES = Path(__file__).parent / "fixtures"

_LABEL = re.compile(r"^P\d+\.\s*")
_SENTENCE_BREAK = re.compile(r"(?<=\.)\s+")


def _between(text, start_marker, end_marker=None):
    start = text.rfind(start_marker)
    assert start >= 0, f"marker {start_marker!r} not in prompt"
    start += len(start_marker)
    if end_marker is None:
        return text[start:]
    end = text.find(end_marker, start)
    return text[start:end if end >= 0 else len(text)]


def facts_from(paragraphs):
    """Reads "Attribute - value." sentences; anything else is noise."""
    facts = {}
    for line in paragraphs.splitlines():
        line = _LABEL.sub("", line.strip())
        for sentence in _SENTENCE_BREAK.split(line):
            attribute, sep, value = sentence.strip().rstrip(".").partition(" - ")
            if sep and attribute and value:
                values = facts.setdefault(attribute, [])
                if value not in values:
                    values.append(value)
    return facts


def facts_to_lines(facts):
    return "\n".join(f"{key}: {'; '.join(values)}" for key, values in facts.items())


def lines_to_facts(text):
    facts = {}
    for line in text.splitlines():
        key, sep, rest = line.partition(": ")
        if sep:
            facts.setdefault(key, []).extend(v for v in rest.split("; ") if v)
    return facts


def union(*tables):
    merged = {}
    for table in tables:
        for key, values in table.items():
            bucket = merged.setdefault(key, [])
            bucket.extend(v for v in values if v not in bucket)
    return merged


class RuleBasedLLM(LlmBackend):
    """
    Answers every prompt the summarizer issues with a deterministic rule.

    Entity paragraphs are written as "Attribute - value." sentences, so generation
    is extraction, updates are unions, dedup is the identity and compression keeps
    the first value of every attribute.
    """

    name = "rules"

    def __init__(self):
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        handler = getattr(self, "_" + request.template_id.replace("-", "_"))
        return LlmResponse(handler(request.prompt), {"backend": self.name})

    def _generate_entity(self, prompt):
        facts = facts_from(_between(prompt, "Paragraphs:\n", "\n\nProceed to generate"))
        if prompt.rstrip().endswith("summary text."):
            return facts_to_lines(facts)
        return "Summary JSON:\n```json\n" + json.dumps(facts, indent=2) + "\n```"

    def _update_entity(self, prompt):
        facts = facts_from(_between(prompt, "New Paragraph:\n", "\n\nGiven Existing Summary"))
        if prompt.rstrip().endswith("summary text."):
            existing = lines_to_facts(_between(prompt, "Given Existing Summary Text:\n", "\n\nProceed to update"))
            return facts_to_lines(union(existing, facts))
        existing = json.loads(_between(prompt, "Given Existing Summary Json:\n", "\n\nProceed to update"))
        return json.dumps(union(existing, facts), indent=2)

    def _dedup(self, prompt):
        return _between(prompt, "Given Existing Summary:\n", "\n\nNew Summary after removing")

    def _cok(self, prompt):
        new = json.loads(_between(prompt, "[NEW SUMMARY]\n", "\n\n[CLASS]"))
        partial = json.loads(_between(prompt, "[PARTIAL SUMMARY]\n"))
        updates, adds = {}, {}
        for field, table in new.items():
            for key, values in table.items():
                path = render_segments((field, key))
                if key in partial.get(field, {}):
                    fresh = [v for v in values if v not in partial[field][key]]
                    if fresh:
                        updates[path] = fresh
                else:
                    adds[path] = values
        return render_cok_response(PatchSet.from_proposals(updates, adds))

    def _compress(self, prompt):
        memory = _between(prompt, "Summary to compress:\n", "\n\nCompressed summary in")
        if prompt.rstrip().endswith("text:"):
            return memory.split(". ")[0]
        doc = json.loads(memory)
        return json.dumps({field: {k: v[:1] for k, v in table.items()} for field, table in doc.items()})

    def _generate_book(self, prompt):
        chunk = _between(prompt, "A segment from a story:\n\n---\n\n", "\n\n---").strip()
        if prompt.rstrip().endswith("text:"):
            return chunk.split(". ")[0] + "."
        name = chunk.split()[0].strip(".,") if chunk else "Segment"
        return json.dumps({"events": {name: [chunk[:40]]}})

    def _update_book(self, prompt):
        chunk = _between(prompt, "A segment from a story:\n\n---\n\n", "\n\n---").strip()
        memory = _between(prompt, "A memory of the story up until this point:\n\n---\n\n", "\n\n---")
        if prompt.rstrip().endswith("text:"):
            return memory.strip() + " " + chunk.split(". ")[0] + "."
        doc = json.loads(memory)
        name = chunk.split()[0].strip(".,") if chunk else "Segment"
        doc.setdefault("events", {}).setdefault(name, []).append(chunk[:40])
        return json.dumps(doc)

    def _final_text(self, prompt):
        doc = json.loads(_between(prompt, "Structured memory:\n", "\n\nFinal summary in text:"))
        facts = union(*[table for table in doc.values() if isinstance(table, dict)])
        return "\n".join(f"{key}: {'; '.join(values)}." for key, values in facts.items())

    def _coherence_eval(self, prompt):
        sentence = _between(prompt, "Sentence:\n", "\n\nAnswer with")
        if "suddenly" in sentence.lower():
            return json.dumps({"confusing": True, "dimensions": ["discontinuity"]})
        return json.dumps({"confusing": False, "dimensions": []})

    def _match_judge(self, prompt):
        predicted = _between(prompt, "Predicted pair:\n", "\n\nReference pairs:").strip().lower()
        listing = _between(prompt, "Reference pairs:\n", "\n\nAnswer with")
        for line in listing.splitlines():
            number, _, pair = line.partition(". ")
            if pair.strip().lower() == predicted:
                return json.dumps({"match": int(number)})
        return '{"match": null}'


class SequentialMockLLM(LlmBackend):
    """Returns scripted replies in order, whatever the prompt; the last reply repeats."""

    name = "sequential"

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        index = min(len(self.requests), len(self.replies)) - 1
        return LlmResponse(self.replies[index], {"backend": self.name})


@pytest.fixture
def rule_llm():
    return RuleBasedLLM()


@pytest.fixture
def sequential_llm():
    return SequentialMockLLM


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def hotel_record():
    from src.data.fetch_data import load_entity_record
    return load_entity_record(FIXTURES / "hotel0.json")


@pytest.fixture
def record_then_replay(tmp_path):
    """Returns (recorder, replay_factory) sharing one cassette file under tmp_path."""

    def make(inner, name="cassette.jsonl"):
        path = tmp_path / name
        recorder = RecorderBackend(inner, path)

        def replay():
            return ScriptedBackend(Cassette.load(path))

        return recorder, replay

    return make
