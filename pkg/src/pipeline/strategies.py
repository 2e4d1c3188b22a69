"""
Incremental summarization strategies over a document stream.

GO summarizes everything in one call, GU rewrites the whole summary every turn,
GM merges per-document summaries programmatically and asks the LLM to dedup,
and CoK applies keyed Update/Add proposals to the structured memory.
"""

import copy
import logging
from dataclasses import dataclass

from src.config import DedupMode, OutputFormat, Strategy, Task
from src.errors import DataError, PipelineError, ReplyParseError, SummarizerError
from src.llm.backends import LlmBackend, LlmRequest, complete
from src.llm.parsing import parse_cok_response, parse_summary
from src.llm.prompts import PromptId, book_instruction, render_prompt
from src.models.memory import (
    ByteTokenizer,
    StructuredMemory,
    chunk_document,
    count_tokens,
    doc_tokens,
    enforce_budget,
    enforce_text_budget,
    exact_dedup,
    format_doc,
    programmatic_merge,
)
from src.models.pathpatch import PatchOutcome, apply_patch_set
from src.models.schema import NodeKind, class_text
from src.pipeline.rendering import render_text_summary

logger = logging.getLogger(__name__)

STORY_SUBJECT = "the story"


@dataclass(frozen=True)
class TurnRecord:
    turn: int
    memory_snapshot: object
    memory_tokens: int
    patch_outcome: PatchOutcome = None
    prompts_issued: int = 0


@dataclass(frozen=True)
class RunResult:
    turns: tuple
    final_summary: object = None
    strategy: str = ""
    subject: str = ""


def run_result_to_dict(result, cfg=None):
    """
    Args:
        result (RunResult): Completed (or partial) run
        cfg (RunConfig): Optional configuration to echo into the file

    Returns:
        dict: JSON-ready run document
    """
    out = {}
    if cfg is not None:
        out["config"] = cfg.echo()
    out.update({
        "strategy": result.strategy,
        "subject": result.subject,
        "turns": [
            {
                "turn": t.turn,
                "memory_snapshot": t.memory_snapshot,
                "memory_tokens": t.memory_tokens,
                "patch_outcome": t.patch_outcome.to_dict() if t.patch_outcome else None,
                "prompts_issued": t.prompts_issued,
            }
            for t in result.turns
        ],
        "final_summary": result.final_summary,
    })
    return out


def run_result_from_dict(obj):
    try:
        turns = tuple(
            TurnRecord(
                t["turn"],
                t["memory_snapshot"],
                t["memory_tokens"],
                PatchOutcome.from_dict(t["patch_outcome"]) if t.get("patch_outcome") else None,
                t.get("prompts_issued", 0),
            )
            for t in obj["turns"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"Run document is missing or has a bad field: {exc}") from None
    return RunResult(turns, obj.get("final_summary"), obj.get("strategy", ""), obj.get("subject", ""))


class _CountingBackend(LlmBackend):
    """Counts calls so each TurnRecord can report how many prompts it issued."""

    def __init__(self, inner):
        self.inner = inner
        self.name = inner.name
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        return self.inner.complete(request)

    def take(self):
        calls, self.calls = self.calls, 0
        return calls


#####################################################
# ONE RUN
#####################################################

class _Run:
    """State of one strategy run over one stream: backend, config and memory."""

    def __init__(self, docs, backend, cfg, subject, tokenizer):
        if not docs:
            raise DataError("Nothing to summarize: the document stream is empty")
        self.docs = docs
        self.backend = _CountingBackend(backend)
        self.cfg = cfg
        self.schema = cfg.summary_schema
        self.subject = subject
        self.tokenizer = tokenizer
        self.is_json = cfg.output_format is OutputFormat.JSON
        self.memory = StructuredMemory.empty(self.schema, cfg.token_budget) if self.is_json else ""
        self.turns = []

    # prompts

    def _paragraph(self, index):
        if self.cfg.task is Task.BOOK:
            return self.docs[index]
        return f"P{index + 1}. {self.docs[index]}"

    def _all_paragraphs(self):
        joiner = "\n\n" if self.cfg.task is Task.BOOK else "\n"
        return joiner.join(self._paragraph(i) for i in range(len(self.docs)))

    def _format_label(self):
        return "JSON" if self.is_json else "text"

    def _view(self, doc):
        """Single-map schemas are shown to the LLM as the flat table the prompts describe."""
        fields = self.schema.root.fields
        if self.cfg.task is Task.ENTITY and len(fields) == 1 and fields[0][1].kind is NodeKind.MAP:
            return format_doc(doc[fields[0][0]])
        return format_doc(doc)

    def _memory_text(self):
        return self._view(self.memory.doc) if self.is_json else self.memory

    def _generate(self, paragraph, turn):
        if self.cfg.task is Task.BOOK:
            bindings = {
                "special_instruction": book_instruction(self.cfg.output_format.value),
                "book_chunk": paragraph,
                "output_format": self._format_label(),
            }
            return self._ask(PromptId.GENERATE_BOOK, bindings, turn)
        bindings = {"entity_name": self.subject, "paragraph": paragraph, "output_format": self.cfg.output_format.value}
        return self._ask(PromptId.GENERATE_ENTITY, bindings, turn)

    def _update(self, paragraph, turn):
        if self.cfg.task is Task.BOOK:
            bindings = {"book_chunk": paragraph, "memory": self._memory_text(), "output_format": self._format_label()}
            return self._ask(PromptId.UPDATE_BOOK, bindings, turn)
        bindings = {
            "entity_name": self.subject,
            "paragraph": paragraph,
            "existing_summary": self._memory_text(),
            "output_format": self.cfg.output_format.value,
        }
        return self._ask(PromptId.UPDATE_ENTITY, bindings, turn)

    # calls

    def _ask(self, template_id, bindings, turn, parse=None):
        """Renders, calls and parses; a parse failure gets `parse_retries` re-asks of the same prompt, each keyed by its attempt."""
        prompt = render_prompt(template_id, bindings, self.cfg.task.value)
        request = LlmRequest(prompt, self.cfg.temperature, template_id, turn)
        if parse is None:
            parse = self._parse_memory
        for attempt in range(self.cfg.parse_retries + 1):
            reply = complete(self.backend, request.retry(attempt))
            try:
                return parse(reply.text)
            except ReplyParseError as exc:
                if attempt == self.cfg.parse_retries:
                    raise
                logger.warning("Re-asking %s at turn %d after an unusable reply: %s", template_id.value, turn, exc)

    def _parse_memory(self, text):
        if self.is_json:
            return parse_summary(text, self.schema)
        return text.strip()

    # turns

    def _enforce_budget(self, turn):
        policy = self.cfg.policy
        if policy is None:
            return
        if self.is_json:
            self.memory = enforce_budget(self.memory, self.backend, self.tokenizer, policy, self.cfg.temperature)
        else:
            self.memory = enforce_text_budget(self.memory, self.backend, self.tokenizer, policy, turn, self.cfg.temperature)

    def _store(self, turn, value):
        if self.is_json:
            self.memory = StructuredMemory(value, self.schema, turn, self.cfg.token_budget)
        else:
            self.memory = value

    def _record(self, turn, outcome=None):
        self._enforce_budget(turn)
        if self.is_json:
            snapshot = copy.deepcopy(self.memory.doc)
            tokens = doc_tokens(self.tokenizer, snapshot)
        else:
            snapshot = self.memory
            tokens = count_tokens(self.tokenizer, snapshot)
        self.turns.append(TurnRecord(turn, snapshot, tokens, outcome, self.backend.take()))

    def generate_once(self):
        self._store(0, self._generate(self._all_paragraphs(), 0))
        self._record(0)

    def generate_update(self):
        for turn in range(len(self.docs)):
            paragraph = self._paragraph(turn)
            reply = self._generate(paragraph, turn) if turn == 0 else self._update(paragraph, turn)
            self._store(turn, reply)
            self._record(turn)

    def _llm_dedup(self, doc, turn):
        bindings = {"existing_summary": self._view(doc)}
        return self._ask(PromptId.DEDUP, bindings, turn)

    def generate_merge(self):
        last = len(self.docs) - 1
        for turn in range(len(self.docs)):
            fresh = self._generate(self._paragraph(turn), turn)
            merged = exact_dedup(programmatic_merge(self.memory.doc, fresh, self.schema))
            if self.cfg.gm_dedup is DedupMode.PER_TURN or turn == last:
                merged = self._llm_dedup(merged, turn)
            self._store(turn, merged)
            self._record(turn)

    def _question(self):
        return f"Merge the new summary and existing summary of {self.subject}."

    def chain_of_key(self):
        self._store(0, self._generate(self._paragraph(0), 0))
        self._record(0)
        for turn in range(1, len(self.docs)):
            fresh = self._generate(self._paragraph(turn), turn)
            bindings = {
                "question": self._question(),
                "new_summary": format_doc(fresh),
                "class_text": class_text(self.schema),
                "partial_summary": format_doc(self.memory.doc),
            }
            patch = self._ask(PromptId.COK, bindings, turn, parse=parse_cok_response)
            doc, outcome = apply_patch_set(self.memory.doc, patch, self.schema)
            logger.info(
                "Turn %d: %d applied, %d skipped", turn, len(outcome.applied), len(outcome.skipped)
            )
            self._store(turn, doc)
            self._record(turn, outcome)

    def final(self):
        memory = self.memory.doc if self.is_json else self.memory
        return final_summary(memory, self.backend, self.cfg, self.subject, len(self.turns))

    def result(self, final=None):
        return RunResult(tuple(self.turns), final, self.cfg.strategy.value, self.subject)


#####################################################
# PUBLIC ENTRY POINTS
#####################################################

def _execute(method, docs, backend, cfg, subject, tokenizer):
    subject = subject or (STORY_SUBJECT if cfg.task is Task.BOOK else "the entity")
    run = _Run(list(docs), backend, cfg, subject, tokenizer or ByteTokenizer())
    logger.info("Starting %s over %d documents about %s", cfg.strategy.value, len(run.docs), subject)
    try:
        getattr(run, method)()
        result = run.result(run.final())
    except SummarizerError as exc:
        raise PipelineError(
            f"{cfg.strategy.value} failed after {len(run.turns)} completed turns: {exc}", run.result(), exc
        ) from exc
    logger.info("Finished %s with %d turns", cfg.strategy.value, len(result.turns))
    return result


def run_generate_once(docs, backend, cfg, subject=None, tokenizer=None):
    """
    Generate-Once: one prompt over all documents.

    Args:
        docs (list[str]): Paragraphs or chunks
        backend (LlmBackend): Completion backend
        cfg (RunConfig): Run configuration
        subject (str): Entity name, or "the story" for books
        tokenizer (Tokenizer): Counter for budgets and snapshots

    Returns:
        RunResult: Exactly one TurnRecord
    """
    return _execute("generate_once", docs, backend, cfg, subject, tokenizer)


def run_generate_update(docs, backend, cfg, subject=None, tokenizer=None):
    """Generate-Update: the LLM rewrites the whole summary at every turn."""
    return _execute("generate_update", docs, backend, cfg, subject, tokenizer)


def run_generate_merge(docs, backend, cfg, subject=None, tokenizer=None):
    """Generate-Merge: key-union merge of per-document summaries, then LLM dedup."""
    if cfg.output_format is not OutputFormat.JSON:
        raise DataError("Generate-Merge needs JSON memory")
    return _execute("generate_merge", docs, backend, cfg, subject, tokenizer)


def run_chain_of_key(docs, backend, cfg, subject=None, tokenizer=None):
    """
    Chain-of-Key: per-document summaries folded into memory through Update/Add patches.

    Patch entries that cannot be applied are skipped and recorded in the turn's
    PatchOutcome; they never abort the run.
    """
    if cfg.output_format is not OutputFormat.JSON:
        raise DataError("Chain-of-Key needs JSON memory")
    return _execute("chain_of_key", docs, backend, cfg, subject, tokenizer)


def final_summary(memory, backend, cfg, subject, turn=0):
    """
    Produces the final summary from the last memory.

    Args:
        memory: Last memory doc (json strategies) or text
        backend (LlmBackend): Used for json-to-text conversion; None selects the deterministic renderer
        cfg (RunConfig): Decides the output format
        subject (str): Entity name or "the story"
        turn (int): Turn index for the cassette key

    Returns:
        dict or str: The doc itself for json output, text otherwise
    """
    if cfg.summary_format is OutputFormat.JSON:
        return copy.deepcopy(memory)
    if isinstance(memory, str):
        return memory
    if backend is None:
        return render_text_summary(memory)
    prompt = render_prompt(PromptId.FINAL_TEXT, {"subject": subject, "memory": format_doc(memory)}, cfg.task.value)
    return complete(backend, LlmRequest(prompt, cfg.temperature, PromptId.FINAL_TEXT, turn)).text.strip()


_DISPATCH = {
    "go": run_generate_once,
    "gu": run_generate_update,
    "gm": run_generate_merge,
    "cok": run_chain_of_key,
}


def stream_documents(source, cfg, tokenizer=None):
    """Book text becomes its chunk stream; a paragraph list is used as is."""
    if isinstance(source, str):
        chunks = chunk_document(tokenizer or ByteTokenizer(), source, cfg.chunk_limit or len(source) or 1)
        return [chunk.text for chunk in chunks]
    return list(source)


def run_strategy(docs, backend, cfg, subject=None, tokenizer=None):
    """
    Runs the strategy named by cfg.strategy.

    Args:
        docs (list[str] | str): Paragraphs, or a whole book text to be chunked
        backend (LlmBackend): Completion backend
        cfg (RunConfig): Run configuration
        subject (str): Entity name; defaults to "the story" on the book task
        tokenizer (Tokenizer): Counter for chunks, budgets and snapshots

    Returns:
        RunResult: Per-turn records and the final summary
    """
    tokenizer = tokenizer or ByteTokenizer()
    stream = stream_documents(docs, cfg, tokenizer)
    return _DISPATCH[Strategy(cfg.strategy).family](stream, backend, cfg, subject, tokenizer)
