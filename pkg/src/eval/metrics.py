"""
Precision / recall / F1 over attribute-value pairs.

Predicted and gold summaries are flattened into (attribute, value) pairs and
matched one-to-one. Matching is exact (normalized case and whitespace), fuzzy
(token Jaccard on attribute and value) or judged by an LLM.
"""

import logging
import re
from dataclasses import dataclass

import numpy as np

from src.errors import ConfigError, EmptySeriesError, ReplyParseError
from src.eval.coherence import split_sentences
from src.llm.backends import DEFAULT_TEMPERATURE, LlmRequest, complete
from src.llm.parsing import extract_json
from src.llm.prompts import PromptId, render_prompt

logger = logging.getLogger(__name__)

FUZZY_THRESHOLD = 0.5
TEXT_ATTRIBUTE = "summary"

_WORD = re.compile(r"\w+")


@dataclass(frozen=True)
class AttrValuePair:
    attribute: str
    value: str

    def __post_init__(self):
        if not self.attribute or not self.value:
            raise ValueError(f"Attribute and value must both be non-empty: {self.attribute!r}, {self.value!r}")


@dataclass(frozen=True)
class MatchResult:
    matched: tuple = ()
    unmatched_pred: tuple = ()
    unmatched_gold: tuple = ()


@dataclass(frozen=True)
class EntityMetrics:
    precision: float
    recall: float
    f1: float

    def to_dict(self):
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class TurnAggregate:
    start: EntityMetrics
    last: EntityMetrics
    avg: EntityMetrics

    def to_dict(self):
        return {"start": self.start.to_dict(), "last": self.last.to_dict(), "avg": self.avg.to_dict()}


#####################################################
# FLATTENING
#####################################################

def _pairs_from(key, value, out):
    if isinstance(value, dict):
        for child_key, child in value.items():
            _pairs_from(child_key, child, out)
    elif isinstance(value, list):
        for item in value:
            _pairs_from(key, item, out)
    elif isinstance(value, str) and value.strip() and key:
        out.append(AttrValuePair(key, value))


def doc_to_pairs(doc):
    """
    Flattens a summary into one pair per value string.

    The attribute is the key directly above the value, so {"attributes": {"A": ["x"]}}
    and {"A": ["x"]} both give [("A", "x")].

    Args:
        doc (dict): Summary or gold document

    Returns:
        list[AttrValuePair]: Pairs in document order
    """
    out = []
    _pairs_from(None, doc, out)
    return out


def text_to_pairs(text):
    """
    Reads "Key: v1; v2" lines back into pairs; other sentences become ("summary", sentence).

    Args:
        text (str): Text summary

    Returns:
        list[AttrValuePair]
    """
    out = []
    if not text or not text.strip():
        return out
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        attribute, sep, rest = line.partition(": ")
        if sep and attribute and not re.search(r"[.!?]", attribute):
            out.extend(AttrValuePair(attribute, v.strip()) for v in rest.split("; ") if v.strip())
            continue
        out.extend(AttrValuePair(TEXT_ATTRIBUTE, s) for s in split_sentences(line))
    return out


def summary_to_pairs(summary):
    if isinstance(summary, dict):
        return doc_to_pairs(summary)
    return text_to_pairs(summary or "")


#####################################################
# MATCHERS
#####################################################

def normalize(text):
    return " ".join(text.lower().split())


def _jaccard(a, b):
    left, right = set(_WORD.findall(a.lower())), set(_WORD.findall(b.lower()))
    if not left and not right:
        return 1.0
    return len(left & right) / len(left | right)


class ExactMatcher:
    name = "exact"

    def score(self, pred, gold):
        same = normalize(pred.attribute) == normalize(gold.attribute) and normalize(pred.value) == normalize(gold.value)
        return 1.0 if same else 0.0

    def choose(self, pred, candidates):
        """Index of the best-scoring candidate (earliest on ties), or None."""
        best, best_score = None, 0.0
        for index, gold in enumerate(candidates):
            score = self.score(pred, gold)
            if score > best_score:
                best, best_score = index, score
        return best


class FuzzyMatcher(ExactMatcher):
    """Token Jaccard on attribute AND value, both at least `threshold`."""

    name = "fuzzy"

    def __init__(self, threshold=FUZZY_THRESHOLD):
        self.threshold = threshold

    def score(self, pred, gold):
        attribute = _jaccard(pred.attribute, gold.attribute)
        value = _jaccard(pred.value, gold.value)
        if attribute < self.threshold or value < self.threshold:
            return 0.0
        return min(attribute, value)


class LlmMatcher:
    """Asks an LLM which remaining gold pair, if any, states the same fact."""

    name = "llm"

    def __init__(self, backend, subject="the entity", temperature=DEFAULT_TEMPERATURE):
        self.backend = backend
        self.subject = subject
        self.temperature = temperature
        self.calls = 0

    def choose(self, pred, candidates):
        if not candidates:
            return None
        listing = "\n".join(f"{i}. {g.attribute}: {g.value}" for i, g in enumerate(candidates, start=1))
        prompt = render_prompt(
            PromptId.MATCH_JUDGE,
            {"subject": self.subject, "predicted": f"{pred.attribute}: {pred.value}", "candidates": listing},
        )
        reply = complete(self.backend, LlmRequest(prompt, self.temperature, PromptId.MATCH_JUDGE, self.calls))
        self.calls += 1
        choice = extract_json(reply.text).get("match")
        if choice is None:
            return None
        if isinstance(choice, bool) or not isinstance(choice, int) or not 1 <= choice <= len(candidates):
            raise ReplyParseError(f"Match judge chose {choice!r} out of {len(candidates)} candidates", reply.text)
        return choice - 1


def build_matcher(name, backend=None, subject="the entity"):
    if name == "exact":
        return ExactMatcher()
    if name == "fuzzy":
        return FuzzyMatcher()
    if name == "llm":
        if backend is None:
            raise ConfigError("The llm matcher needs an evaluator backend (--evaluator)")
        return LlmMatcher(backend, subject)
    raise ConfigError(f"Unknown matcher '{name}'")


#####################################################
# SCORING
#####################################################

def match_pairs(pred, gold, matcher):
    """
    Greedy one-to-one matching, predicted pairs in order.

    Args:
        pred (list[AttrValuePair]): Predicted pairs
        gold (list[AttrValuePair]): Reference pairs
        matcher: ExactMatcher, FuzzyMatcher or LlmMatcher

    Returns:
        MatchResult: Every pair lands on exactly one side
    """
    remaining = list(gold)
    matched, unmatched_pred = [], []
    for pair in pred:
        index = matcher.choose(pair, remaining)
        if index is None:
            unmatched_pred.append(pair)
        else:
            matched.append((pair, remaining.pop(index)))
    return MatchResult(tuple(matched), tuple(unmatched_pred), tuple(remaining))


def compute_prf(match):
    """
    Args:
        match (MatchResult): Matching outcome

    Returns:
        EntityMetrics: P and R are 0 when their denominator is 0; F1 = 2PR/(P+R) or 0
    """
    hits = len(match.matched)
    predicted = hits + len(match.unmatched_pred)
    expected = hits + len(match.unmatched_gold)
    precision = hits / predicted if predicted else 0.0
    recall = hits / expected if expected else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EntityMetrics(precision, recall, f1)


def _mean(series):
    if not series:
        raise EmptySeriesError("Cannot average an empty series of metrics")
    values = np.array([[m.precision, m.recall, m.f1] for m in series], dtype=float)
    precision, recall, f1 = values.mean(axis=0)
    return EntityMetrics(float(precision), float(recall), float(f1))


def aggregate_turns(series):
    """
    Args:
        series (list[EntityMetrics]): One entry per turn

    Returns:
        TurnAggregate: First turn, last turn and per-metric mean

    Raises:
        EmptySeriesError: For an empty series
    """
    avg = _mean(series)
    return TurnAggregate(series[0], series[-1], avg)


def macro_average(metrics):
    """Per-entity scores averaged across entities; F1 is the mean of per-entity F1."""
    return _mean(list(metrics))


def macro_aggregate(aggregates):
    aggregates = list(aggregates)
    return TurnAggregate(
        macro_average(a.start for a in aggregates),
        macro_average(a.last for a in aggregates),
        macro_average(a.avg for a in aggregates),
    )
