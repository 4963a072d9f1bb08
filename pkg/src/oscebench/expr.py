"""Composite-criterion boolean expressions.

Checklist items are sometimes composite ("asks about A or B", "two of A, B,
C").  This module defines the canonical expression grammar used to represent
their logic, an evaluator with standard boolean semantics, and the
aggregation of per-sub-criterion judgments back into a single decision.

Grammar::

    expr := ATOM | AND(expr, expr, ...) | OR(expr, expr, ...) | NOF(k; expr, ...)

ATOM is an identifier ``[A-Za-z_][A-Za-z0-9_-]*``.  AND/OR take at least two
children; NOF takes ``1 <= k <= len(children)``.  ``NOF(1; ...)`` with two or
more children is normalized to OR (identical semantics, smaller canonical
space).  Trees deeper than MAX_DEPTH are rejected.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .errors import (
    ArityError,
    DecompositionError,
    ExprSyntaxError,
    MissingAssignment,
    StructuredOutputError,
    ValidationError,
)

MAX_DEPTH = 4

CriterionExpr = Union["Atom", "And", "Or", "NOf"]


@dataclass(frozen=True)
class Atom:
    id: str


@dataclass(frozen=True)
class And:
    children: tuple[CriterionExpr, ...]


@dataclass(frozen=True)
class Or:
    children: tuple[CriterionExpr, ...]


@dataclass(frozen=True)
class NOf:
    k: int
    children: tuple[CriterionExpr, ...]


def depth(expr: CriterionExpr) -> int:
    if isinstance(expr, Atom):
        return 1
    return 1 + max(depth(c) for c in expr.children)


def atom_ids(expr: CriterionExpr) -> list[str]:
    """Atom identifiers in left-to-right order."""
    if isinstance(expr, Atom):
        return [expr.id]
    out: list[str] = []
    for child in expr.children:
        out.extend(atom_ids(child))
    return out


def validate_expr(expr: CriterionExpr) -> None:
    """Enforce arity, depth and atom-uniqueness invariants."""
    if isinstance(expr, (And, Or)) and len(expr.children) < 2:
        kind = "AND" if isinstance(expr, And) else "OR"
        raise ArityError(f"{kind} requires at least 2 children, got {len(expr.children)}")
    if isinstance(expr, NOf):
        if expr.k < 1 or expr.k > len(expr.children):
            raise ArityError(
                f"NOF k={expr.k} out of range for {len(expr.children)} children"
            )
    if not isinstance(expr, Atom):
        for child in expr.children:
            validate_expr(child)
    ids = atom_ids(expr)
    if len(ids) != len(set(ids)):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate atom ids in expression: {dupes}")
    if depth(expr) > MAX_DEPTH:
        raise ValidationError(f"expression deeper than {MAX_DEPTH} levels")


# --- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<op>AND|OR|NOF)\b|(?P<atom>[A-Za-z_][A-Za-z0-9_-]*)"
    r"|(?P<punct>[(),;])|(?P<int>\d+))"
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> ExprSyntaxError:
        return ExprSyntaxError(message, self.pos)

    def peek(self):
        m = _TOKEN_RE.match(self.text, self.pos)
        if m is None:
            if self.text[self.pos:].strip():
                raise self.error("unexpected character")
            return None
        return m

    def next(self):
        m = self.peek()
        if m is not None:
            self.pos = m.end()
        return m

    def expect_punct(self, char: str) -> None:
        m = self.next()
        if m is None or m.group("punct") != char:
            raise self.error(f"expected {char!r}")

    def parse_expr(self) -> CriterionExpr:
        m = self.next()
        if m is None:
            raise self.error("expected expression")
        if m.group("atom"):
            return Atom(m.group("atom"))
        op = m.group("op")
        if op is None:
            raise self.error("expected ATOM, AND, OR or NOF")
        self.expect_punct("(")
        k = None
        if op == "NOF":
            km = self.next()
            if km is None or km.group("int") is None:
                raise self.error("NOF requires an integer count")
            k = int(km.group("int"))
            self.expect_punct(";")
        children = [self.parse_expr()]
        while True:
            m = self.next()
            if m is None:
                raise self.error("unterminated operator, expected ')' or ','")
            punct = m.group("punct")
            if punct == ",":
                children.append(self.parse_expr())
            elif punct == ")":
                break
            else:
                raise self.error("expected ')' or ','")
        if op == "AND":
            return And(tuple(children))
        if op == "OR":
            return Or(tuple(children))
        assert k is not None
        if k == 1 and len(children) >= 2:
            return Or(tuple(children))
        return NOf(k, tuple(children))


def parse_expr(canonical: str) -> CriterionExpr:
    """Parse a canonical expression string into a validated tree."""
    parser = _Parser(canonical)
    expr = parser.parse_expr()
    trailing = parser.peek()
    if trailing is not None or canonical[parser.pos:].strip():
        raise parser.error("trailing input after expression")
    validate_expr(expr)
    return expr


def print_expr(expr: CriterionExpr) -> str:
    """Render the canonical string form; inverse of parse_expr."""
    if isinstance(expr, Atom):
        return expr.id
    inner = ", ".join(print_expr(c) for c in expr.children)
    if isinstance(expr, And):
        return f"AND({inner})"
    if isinstance(expr, Or):
        return f"OR({inner})"
    return f"NOF({expr.k}; {inner})"


# --- evaluation --------------------------------------------------------------

def eval_expr(expr: CriterionExpr, assignment: dict[str, bool]) -> bool:
    """Standard boolean semantics; NOF(k; ...) is true iff >= k children are."""
    if isinstance(expr, Atom):
        if expr.id not in assignment:
            raise MissingAssignment(expr.id)
        return assignment[expr.id]
    values = [eval_expr(c, assignment) for c in expr.children]
    if isinstance(expr, And):
        return all(values)
    if isinstance(expr, Or):
        return any(values)
    return sum(values) >= expr.k


# --- decomposition -----------------------------------------------------------

@dataclass
class DecomposedCriterion:
    original_id: str
    sub_criteria: dict[str, str]
    expr: CriterionExpr

    def validate(self) -> None:
        ids = set(atom_ids(self.expr))
        texts = set(self.sub_criteria)
        if ids != texts:
            raise ValidationError(
                f"atoms {sorted(ids)} do not match sub-criteria texts {sorted(texts)}"
            )
        validate_expr(self.expr)

    def to_dict(self) -> dict:
        return {
            "original_id": self.original_id,
            "sub_criteria": dict(sorted(self.sub_criteria.items())),
            "expression": print_expr(self.expr),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecomposedCriterion":
        dec = cls(
            original_id=data["original_id"],
            sub_criteria=dict(data["sub_criteria"]),
            expr=parse_expr(data["expression"]),
        )
        dec.validate()
        return dec


def atomic_decomposition(criterion_id: str, text: str) -> DecomposedCriterion:
    """Single-atom pass-through for non-composite criteria."""
    return DecomposedCriterion(
        original_id=criterion_id,
        sub_criteria={"A": text},
        expr=Atom("A"),
    )


DECOMPOSE_SCHEMA_FIELDS = [
    ("composite", "boolean"),
    ("sub_criteria", "object"),
    ("expression", "string"),
]


def criterion_text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def decompose(criterion, gateway) -> DecomposedCriterion:
    """Split a composite criterion into sub-criteria via the LLM.

    The prompt instructs the model to emit the canonical grammar, so
    validation is a parse.  Raises DecompositionError when the gateway
    repair loop is exhausted or the parsed output violates an invariant;
    callers fall back to atomic_decomposition and record the fallback.
    """
    from .gateway import SchemaField, StructuredSchema
    from .prompts import render_template

    if not criterion.text:
        raise DecompositionError("criterion text is empty")
    prompt = render_template("evaluation/decompose.txt", criterion_text=criterion.text)
    schema = StructuredSchema(
        fields=[SchemaField(name, kind) for name, kind in DECOMPOSE_SCHEMA_FIELDS]
    )
    try:
        record, _attempts = gateway.complete_structured_prompt(prompt, schema)
    except StructuredOutputError as exc:
        raise DecompositionError(f"decomposition output never parsed: {exc}") from exc
    if not record["composite"]:
        return atomic_decomposition(criterion.id, criterion.text)
    subs = {str(k): str(v) for k, v in record["sub_criteria"].items()}
    try:
        expr = parse_expr(str(record["expression"]))
        dec = DecomposedCriterion(criterion.id, subs, expr)
        dec.validate()
    except (ExprSyntaxError, ArityError, ValidationError) as exc:
        raise DecompositionError(f"invalid decomposition for {criterion.id}: {exc}") from exc
    return dec


def decompose_with_fallback(criterion, gateway) -> tuple[DecomposedCriterion, bool]:
    """decompose(), falling back to a single atom on failure.

    Returns (decomposition, fallback_fired).
    """
    try:
        return decompose(criterion, gateway), False
    except DecompositionError:
        return atomic_decomposition(criterion.id, criterion.text), True


class DecompositionCache:
    """File-backed cache keyed by criterion text hash (decompositions.json)."""

    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, dict] = {}
        if self.path is not None and self.path.exists():
            self._entries = json.loads(self.path.read_text(encoding="utf-8"))

    def get(self, text: str) -> DecomposedCriterion | None:
        raw = self._entries.get(criterion_text_hash(text))
        return DecomposedCriterion.from_dict(raw) if raw is not None else None

    def put(self, text: str, dec: DecomposedCriterion) -> None:
        self._entries[criterion_text_hash(text)] = dec.to_dict()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(
                json.dumps(self._entries, sort_keys=True, indent=2, ensure_ascii=False),
                encoding="utf-8",
            )


# --- aggregation -------------------------------------------------------------

def merge_ranges(ranges: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Sort and merge overlapping or adjacent turn-index ranges."""
    merged: list[tuple[int, int]] = []
    for start, end in sorted(ranges):
        if merged and start <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


@dataclass
class AggregatedJudgment:
    decision: bool
    justification: str
    evidence: list[tuple[int, int]] = field(default_factory=list)


def aggregate(decomposed: DecomposedCriterion, sub_judgments: dict) -> AggregatedJudgment:
    """Combine per-sub-criterion judgments through the operator tree.

    ``sub_judgments`` maps sub-criterion id to any object with ``decision``,
    ``justification`` and ``evidence`` attributes.
    """
    decisions = {}
    for atom in atom_ids(decomposed.expr):
        if atom not in sub_judgments:
            raise MissingAssignment(atom)
        decisions[atom] = bool(sub_judgments[atom].decision)
    decision = eval_expr(decomposed.expr, decisions)
    parts = []
    evidence: list[tuple[int, int]] = []
    for atom in atom_ids(decomposed.expr):
        judgment = sub_judgments[atom]
        parts.append(f"[{atom}: {decomposed.sub_criteria[atom]}] {judgment.justification}")
        evidence.extend(tuple(r) for r in judgment.evidence)
    return AggregatedJudgment(
        decision=decision,
        justification="\n".join(parts),
        evidence=merge_ranges(evidence),
    )
