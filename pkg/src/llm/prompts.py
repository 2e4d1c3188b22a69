"""
Prompt templates for every LLM call the summarizer makes.

Templates live as Jinja text files in `src/llm/prompts/`. A task-specific
variant `<id>.<task>.txt` takes precedence over the plain `<id>.txt`.
"""

import logging
from enum import Enum
from pathlib import Path

import jinja2

from src.errors import ConfigError, MissingPlaceholderError

logger = logging.getLogger(__name__)

PROMPTS_DIR = Path(__file__).parent / "prompts"


class PromptId(str, Enum):
    GENERATE_ENTITY = "generate-entity"
    UPDATE_ENTITY = "update-entity"
    DEDUP = "dedup"
    COK = "cok"
    COMPRESS = "compress"
    GENERATE_BOOK = "generate-book"
    UPDATE_BOOK = "update-book"
    JSON_INSTRUCTION = "json-instruction"
    TEXT_INSTRUCTION = "text-instruction"
    FINAL_TEXT = "final-text"
    COHERENCE_EVAL = "coherence-eval"
    MATCH_JUDGE = "match-judge"


_ENV = jinja2.Environment(
    loader=jinja2.FileSystemLoader(str(PROMPTS_DIR), encoding="utf-8"),
    undefined=jinja2.StrictUndefined,
    autoescape=False,
)


def template_name(template_id, task=None):
    """
    Picks the template file for an id, preferring the task-specific variant.

    Args:
        template_id (PromptId | str): Template identifier
        task (str): Task name such as "entity" or "book"

    Returns:
        str: File name relative to PROMPTS_DIR
    """
    template_id = PromptId(template_id)
    if task:
        variant = f"{template_id.value}.{task}.txt"
        if (PROMPTS_DIR / variant).is_file():
            return variant
    return f"{template_id.value}.txt"


def load_template(template_id, task=None):
    name = template_name(template_id, task)
    try:
        return _ENV.get_template(name)
    except jinja2.TemplateNotFound:
        raise ConfigError(f"Prompt template not found: {PROMPTS_DIR / name}") from None


def render_prompt(template_id, bindings, task=None):
    """
    Renders a prompt with strict placeholder checking.

    Args:
        template_id (PromptId | str): Which prompt to render
        bindings (dict): Placeholder values, e.g. {"entity_name": "HOTEL0", "paragraph": "..."}
        task (str): Optional task name selecting a variant ("book" for the CoK book prompt)

    Returns:
        str: The rendered prompt; identical bindings give identical bytes

    Raises:
        MissingPlaceholderError: When the template uses a name absent from `bindings`
    """
    template = load_template(template_id, task)
    try:
        return template.render(**bindings)
    except jinja2.UndefinedError as exc:
        raise MissingPlaceholderError(
            f"Template '{PromptId(template_id).value}' is missing a binding: {exc.message}"
        ) from None


def book_instruction(output_format):
    """Returns the json/text special instruction inserted into the book prompts."""
    if output_format == "json":
        return render_prompt(PromptId.JSON_INSTRUCTION, {})
    return render_prompt(PromptId.TEXT_INSTRUCTION, {})
