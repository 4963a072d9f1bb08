"""Canonical data model for stations, transcripts and label sets."""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field

from .errors import ValidationError

OIAP_PHASES = ("Opening", "InformationCollection", "Assessment", "Plan")
ORDERING_STRATEGIES = ("OIAP", "ContextDriven")
ROLES = ("Doctor", "Patient")
CORPUS_TAGS = ("Unperturbed", "Perturbed", "Real")


@dataclass(frozen=True)
class Criterion:
    id: str
    text: str
    dependencies: frozenset[str] = frozenset()
    oiap_phase: str | None = None
    composite: str | None = None  # canonical expression, set by decomposition

    def __post_init__(self):
        if not self.text:
            raise ValidationError(f"criterion {self.id!r} has empty text")
        if self.id in self.dependencies:
            raise ValidationError(f"criterion {self.id!r} depends on itself")
        if self.oiap_phase is not None and self.oiap_phase not in OIAP_PHASES:
            raise ValidationError(
                f"criterion {self.id!r} has unknown OIAP phase {self.oiap_phase!r}"
            )


@dataclass
class Station:
    id: str
    doctor_sheet: dict[str, str]
    patient_sheet: dict[str, str]
    criteria: list[Criterion]
    ordering_strategy: str = "OIAP"

    def __post_init__(self):
        validate_station(self)

    def criterion_ids(self) -> list[str]:
        return [c.id for c in self.criteria]

    def criterion(self, criterion_id: str) -> Criterion:
        for c in self.criteria:
            if c.id == criterion_id:
                return c
        raise KeyError(criterion_id)

    def dependents_of(self, criterion_id: str) -> set[str]:
        """Ids of criteria that declare a dependency on criterion_id."""
        return {c.id for c in self.criteria if criterion_id in c.dependencies}


def validate_station(station: Station) -> None:
    if station.ordering_strategy not in ORDERING_STRATEGIES:
        raise ValidationError(
            f"unknown ordering strategy {station.ordering_strategy!r}"
        )
    ids = [c.id for c in station.criteria]
    seen: set[str] = set()
    for cid in ids:
        if cid in seen:
            raise ValidationError(f"duplicate criterion id {cid!r}")
        seen.add(cid)
    for c in station.criteria:
        for dep in c.dependencies:
            if dep not in seen:
                raise ValidationError(
                    f"criterion {c.id!r} depends on unknown criterion {dep!r}"
                )
    graph = {c.id: set(c.dependencies) for c in station.criteria}
    try:
        tuple(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise ValidationError(
            f"dependency cycle through criteria {list(cycle)}"
        ) from exc


@dataclass(frozen=True)
class Turn:
    index: int
    role: str
    text: str

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError("turn index must be non-negative")
        if self.role not in ROLES:
            raise ValidationError(f"unknown turn role {self.role!r}")
        if not self.text:
            raise ValidationError(f"turn {self.index} has empty text")


@dataclass
class GenerationProvenance:
    slice_size: int
    seed: int
    plan_id: str | None
    slices: list[list[str]]  # ordered criterion ids per slice


@dataclass
class Transcript:
    id: str
    station_id: str
    turns: list[Turn]
    provenance: GenerationProvenance | None = None
    corpus_tag: str = "Unperturbed"

    def __post_init__(self):
        if self.corpus_tag not in CORPUS_TAGS:
            raise ValidationError(f"unknown corpus tag {self.corpus_tag!r}")
        for expected, turn in enumerate(self.turns):
            if turn.index != expected:
                raise ValidationError(
                    f"turn indices must be contiguous from 0; "
                    f"got {turn.index} at position {expected}"
                )


@dataclass
class LabelEntry:
    decision: bool
    justification: str
    evidence: list[tuple[int, int]] = field(default_factory=list)
    source: str = "Silver"  # Silver | Reviewed
    flagged: bool = False   # mandatory human review (labeling failure)


@dataclass
class ReviewEvent:
    criterion_id: str
    new_decision: bool
    reviewer: str
    note: str
    timestamp: str  # UTC ISO-8601
    prior_decision: bool


@dataclass
class LabelSet:
    transcript_id: str
    mode: str  # Soft | Strict
    entries: dict[str, LabelEntry] = field(default_factory=dict)
    review_log: list[ReviewEvent] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("Soft", "Strict"):
            raise ValidationError(f"unknown labeling mode {self.mode!r}")

    def decisions(self) -> dict[str, bool]:
        return {cid: entry.decision for cid, entry in self.entries.items()}


def validate_labelset(labels: LabelSet, station: Station, transcript: Transcript) -> None:
    """Entries cover every station criterion exactly once; evidence in range."""
    expected = set(station.criterion_ids())
    actual = set(labels.entries)
    if expected != actual:
        missing = sorted(expected - actual)
        extra = sorted(actual - expected)
        raise ValidationError(
            f"label set for {labels.transcript_id!r} does not cover the station "
            f"(missing {missing}, extra {extra})"
        )
    n_turns = len(transcript.turns)
    for cid, entry in labels.entries.items():
        for start, end in entry.evidence:
            if not (0 <= start <= end < n_turns):
                raise ValidationError(
                    f"evidence range ({start}, {end}) for criterion {cid!r} "
                    f"outside transcript of {n_turns} turns"
                )
    for event in labels.review_log:
        if event.criterion_id not in expected:
            raise ValidationError(
                f"review event references unknown criterion {event.criterion_id!r}"
            )
