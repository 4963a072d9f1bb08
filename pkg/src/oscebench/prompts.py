"""Prompt template loading and rendering.

Templates are versioned text files shipped as package data.  They use
``str.format`` named placeholders; the version string is recorded in run
manifests so runs are replayable.
"""

from __future__ import annotations

from importlib import resources

TEMPLATE_VERSION = "v1"

TRANSCRIPT_BEGIN = "TRANSCRIPT:"
TRANSCRIPT_END = "END TRANSCRIPT"


def load_template(name: str) -> str:
    """Load a template by relative name, e.g. ``generation/slice.txt``."""
    package = resources.files("oscebench") / "prompts" / name
    return package.read_text(encoding="utf-8")


def render_template(name: str, **values: str) -> str:
    return load_template(name).format(**values)


def format_criteria_block(criteria) -> str:
    """One line per criterion: ``- [id] text (depends on: a, b)``."""
    lines = []
    for c in criteria:
        suffix = ""
        if c.dependencies:
            suffix = " (depends on: " + ", ".join(sorted(c.dependencies)) + ")"
        lines.append(f"- [{c.id}] {c.text}{suffix}")
    return "\n".join(lines)


def format_slice_block(items: list[tuple[str, str]]) -> str:
    """One line per (criterion id, effective text) pair."""
    return "\n".join(f"- [{cid}] {text}" for cid, text in items)


def format_transcript_block(turns) -> str:
    body = "\n".join(f"#{t.index} {t.role}: {t.text}" for t in turns)
    return f"{TRANSCRIPT_BEGIN}\n{body}\n{TRANSCRIPT_END}"


def format_empty_transcript_block() -> str:
    return f"{TRANSCRIPT_BEGIN}\n(no relevant segments)\n{TRANSCRIPT_END}"
