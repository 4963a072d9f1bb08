"""Medical term spotting, concept lookup and definition injection.

A deterministic dictionary matcher stands in for a medical NER model:
greedy longest-match, left to right, case- and diacritic-insensitive,
aligned on token boundaries.  The lexicon file format is source-agnostic;
any knowledge base can populate it.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateSurface, ParseError, UnknownConcept

ALLOWED_LANGUAGES = ("fr", "en")

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def fold(text: str) -> str:
    """Case- and diacritic-fold: canonical decomposition, strip marks, casefold."""
    decomposed = unicodedata.normalize("NFD", text)
    stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
    return stripped.casefold()


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """(token, start, end) triples with character offsets in the source text."""
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


@dataclass
class Definition:
    language: str
    text: str
    source: str


@dataclass
class Concept:
    id: str
    label: str
    definitions: list[Definition] = field(default_factory=list)


@dataclass
class Lexicon:
    entries: dict[tuple[str, ...], str] = field(default_factory=dict)  # folded tokens -> concept id
    concepts: dict[str, Concept] = field(default_factory=dict)
    max_tokens: int = 0


def build_lexicon(source: Path | str | list) -> Lexicon:
    """Build a validated Lexicon from a lexicon file or parsed entry list.

    File format: JSON array of
    {"surface", "concept", "label", "definitions": [{"lang", "text", "source"}]}.
    """
    if isinstance(source, (str, Path)):
        try:
            data = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed lexicon file: {exc}") from exc
    else:
        data = source
    if not isinstance(data, list):
        raise ParseError("lexicon must be a JSON array of entries")
    lexicon = Lexicon()
    for entry in data:
        try:
            surface = str(entry["surface"])
            concept_id = str(entry["concept"])
            label = str(entry["label"])
            raw_definitions = entry.get("definitions", [])
        except (KeyError, TypeError) as exc:
            raise ParseError(f"lexicon entry missing field: {exc}") from exc
        key = tuple(fold(tok) for tok, _, _ in tokenize(surface))
        if not key:
            raise ParseError(f"lexicon surface {surface!r} has no tokens")
        if key in lexicon.entries:
            raise DuplicateSurface(surface)
        definitions = []
        for d in raw_definitions:
            lang = str(d["lang"])
            if lang not in ALLOWED_LANGUAGES:
                raise ParseError(
                    f"definition language {lang!r} not allowed "
                    f"(must be one of {ALLOWED_LANGUAGES})"
                )
            definitions.append(
                Definition(language=lang, text=str(d["text"]), source=str(d.get("source", "")))
            )
        lexicon.entries[key] = concept_id
        if concept_id not in lexicon.concepts:
            lexicon.concepts[concept_id] = Concept(id=concept_id, label=label)
        lexicon.concepts[concept_id].definitions.extend(definitions)
        lexicon.max_tokens = max(lexicon.max_tokens, len(key))
    return lexicon


@dataclass(frozen=True)
class TermMatch:
    span: tuple[int, int]  # character offsets in the source text
    surface: str
    concept_id: str


def match_terms(text: str, lexicon: Lexicon) -> list[TermMatch]:
    """Greedy longest-match over token windows, left to right, non-overlapping."""
    tokens = tokenize(text)
    folded = [fold(tok) for tok, _, _ in tokens]
    matches: list[TermMatch] = []
    i = 0
    while i < len(tokens):
        found = None
        max_len = min(lexicon.max_tokens, len(tokens) - i)
        for length in range(max_len, 0, -1):
            key = tuple(folded[i : i + length])
            concept_id = lexicon.entries.get(key)
            if concept_id is not None:
                start = tokens[i][1]
                end = tokens[i + length - 1][2]
                found = TermMatch(
                    span=(start, end), surface=text[start:end], concept_id=concept_id
                )
                i += length
                break
        if found is not None:
            matches.append(found)
        else:
            i += 1
    return matches


def definition_for(concept_id: str, lexicon: Lexicon) -> Definition | None:
    """First stored definition for the concept, or None when it has none."""
    if concept_id not in lexicon.concepts:
        raise UnknownConcept(concept_id)
    definitions = lexicon.concepts[concept_id].definitions
    return definitions[0] if definitions else None


DEFINITIONS_HEADER = "Définitions médicales :"


def inject_definitions(
    task_description: str, matches: list[TermMatch], lexicon: Lexicon
) -> str:
    """Append a delimited definitions block for each unique matched concept.

    Concepts appear once each in first-occurrence order; concepts without a
    stored definition are skipped.  With nothing to inject, the input is
    returned byte-identical.
    """
    seen: set[str] = set()
    lines: list[str] = []
    for match in matches:
        if match.concept_id in seen:
            continue
        seen.add(match.concept_id)
        definition = definition_for(match.concept_id, lexicon)
        if definition is None:
            continue
        label = lexicon.concepts[match.concept_id].label
        lines.append(f"- {label} : {definition.text}")
    if not lines:
        return task_description
    block = "\n".join([DEFINITIONS_HEADER, *lines])
    return f"{task_description}\n\n---\n{block}\n---"
