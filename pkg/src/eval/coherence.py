"""
Sentence-level coherence evaluation of book summaries.

Each sentence is judged by an evaluator LLM against eight error dimensions; the
confusion ratio is the share of sentences flagged confusing and the coherence
score is 1 minus that ratio.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from src.errors import DataError, ReplyParseError
from src.llm.backends import DEFAULT_TEMPERATURE, LlmRequest, complete
from src.llm.parsing import extract_json
from src.llm.prompts import PromptId, render_prompt

logger = logging.getLogger(__name__)

DIMENSIONS = (
    "entity omission",
    "event omission",
    "causal omission",
    "salience",
    "discontinuity",
    "duplication",
    "inconsistency",
    "language",
)

ABBREVIATIONS = {"mr", "mrs", "ms", "dr", "st", "jr", "sr", "prof", "etc", "vs"}

_TERMINAL = re.compile(r"[.!?]+(?=\s)")


def _guarded(text, end):
    """True when the punctuation ending at `end` closes an initial or abbreviation."""
    head = text[:end].rstrip(".!?")
    word = head.split()[-1] if head.split() else ""
    word = word.lstrip("(\"'")
    if text[end - 1] != ".":
        return False
    if len(word) == 1 and word.isalpha():
        return True
    return word.lower() in ABBREVIATIONS


def split_sentences(summary_text):
    """
    Splits a summary into sentences.

    Breaks after ., ! or ? followed by whitespace, and at line breaks. Single-letter
    initials and common abbreviations ("Mr.", "Dr.", "etc.") do not end a sentence.

    Args:
        summary_text (str): Summary to split

    Returns:
        list[str]: Non-empty sentences in order

    Raises:
        DataError: When the text holds no sentence at all
    """
    if not summary_text or not summary_text.strip():
        raise DataError("Cannot split an empty summary into sentences")
    sentences = []
    for line in summary_text.splitlines():
        start = 0
        for match in _TERMINAL.finditer(line):
            if _guarded(line, match.end()):
                continue
            sentences.append(line[start:match.end()].strip())
            start = match.end()
        sentences.append(line[start:].strip())
    return [s for s in sentences if s]


@dataclass(frozen=True)
class SentenceVerdict:
    text: str
    confusing: bool
    dimensions: tuple = ()


@dataclass(frozen=True)
class CoherenceReport:
    sentences: tuple
    confusion_ratio: float
    coherence_score: float

    def to_dict(self):
        return {
            "sentences": [
                {"text": s.text, "confusing": s.confusing, "dimensions": list(s.dimensions)} for s in self.sentences
            ],
            "confusion_ratio": self.confusion_ratio,
            "coherence_score": self.coherence_score,
        }


def _as_bool(value):
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("yes", "true", "no", "false"):
        return value.strip().lower() in ("yes", "true")
    raise ReplyParseError(f"Verdict 'confusing' must be a boolean, got {value!r}")


def parse_verdict(text, sentence):
    """
    Reads {"confusing": bool, "dimensions": [...]} from an evaluator reply.

    Unknown dimension labels are dropped.

    Args:
        text (str): Evaluator reply
        sentence (str): The sentence being judged

    Returns:
        SentenceVerdict
    """
    obj = extract_json(text)
    if "confusing" not in obj:
        raise ReplyParseError("Verdict has no 'confusing' field", text)
    confusing = _as_bool(obj["confusing"])
    labels = []
    for label in obj.get("dimensions") or []:
        label = str(label).strip().lower()
        if label in DIMENSIONS:
            if label not in labels:
                labels.append(label)
        else:
            logger.warning("Ignoring unknown coherence dimension %r", label)
    return SentenceVerdict(sentence, confusing, tuple(labels))


def _judge(backend, summary_text, sentence, index, temperature, parse_retries):
    prompt = render_prompt(PromptId.COHERENCE_EVAL, {"summary": summary_text, "sentence": sentence})
    request = LlmRequest(prompt, temperature, PromptId.COHERENCE_EVAL, index)
    for attempt in range(parse_retries + 1):
        reply = complete(backend, request.retry(attempt))
        try:
            return parse_verdict(reply.text, sentence)
        except ReplyParseError as exc:
            if attempt == parse_retries:
                raise
            logger.warning("Re-asking the evaluator for sentence %d: %s", index, exc)


def coherence_eval(summary_text, evaluator_backend, workers=1, temperature=DEFAULT_TEMPERATURE, parse_retries=1):
    """
    Judges every sentence of a summary and computes the coherence score.

    Args:
        summary_text (str): Final text summary
        evaluator_backend (LlmBackend): Live or scripted evaluator
        workers (int): Concurrent evaluator calls; results keep sentence order
        temperature (float): Sampling temperature
        parse_retries (int): Re-asks per sentence after an unusable verdict

    Returns:
        CoherenceReport: confusion_ratio + coherence_score == 1
    """
    sentences = split_sentences(summary_text)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        verdicts = list(pool.map(
            lambda item: _judge(evaluator_backend, summary_text, item[1], item[0], temperature, parse_retries),
            enumerate(sentences),
        ))
    confusing = sum(1 for v in verdicts if v.confusing)
    ratio = confusing / len(verdicts)
    logger.info("%d of %d sentences flagged confusing", confusing, len(verdicts))
    return CoherenceReport(tuple(verdicts), ratio, 1.0 - ratio)
