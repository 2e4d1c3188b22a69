"""
Deterministic text rendering of structured summaries.
"""


def _value_text(value):
    if isinstance(value, list):
        return "; ".join(_value_text(v) for v in value)
    if isinstance(value, dict):
        return "; ".join(f"{key}: {_value_text(v)}" for key, v in value.items())
    return str(value)


def _entry_lines(value):
    if isinstance(value, dict):
        return [f"{key}: {_value_text(v)}".rstrip() for key, v in value.items()]
    if isinstance(value, list):
        return [_value_text(value)] if value else []
    return [value] if value else []


def render_text_summary(doc):
    """
    Renders a summary as "Key: v1; v2" lines.

    A document with one top-level field is rendered as that field's entries only.
    With several fields, each one gets a capitalized header line followed by its
    entries, and sections are separated by a blank line.

    Args:
        doc (dict): Valid summary, e.g. {"attributes": {"A": ["x", "y"]}}

    Returns:
        str: e.g. "A: x; y"; "" for an empty entity summary
    """
    if len(doc) == 1:
        (only,) = doc.values()
        return "\n".join(_entry_lines(only))
    sections = []
    for name, value in doc.items():
        sections.append("\n".join([name.capitalize()] + _entry_lines(value)))
    return "\n\n".join(sections)
