"""Silver labeling under calibrated strictness modes, self-consistency
measurement, and human review merging.

Labeling failures never abort a corpus: the entry defaults to a failed
decision and is flagged for mandatory human review, which is what the
review loop exists to adjudicate.
"""

from __future__ import annotations

import logging
from itertools import combinations

from .errors import StructuredOutputError, UnknownCriterion, UsageError
from .gateway import JUDGMENT_SCHEMA, Gateway
from .metrics import AgreementReport, cohen_kappa
from .models import LabelEntry, LabelSet, ReviewEvent, Station, Transcript
from .prompts import format_transcript_block, render_template

log = logging.getLogger(__name__)

MODE_TEMPLATES = {
    "Soft": "labeling/soft.txt",
    "Strict": "labeling/strict.txt",
}


def clamp_evidence(
    evidence: list[tuple[int, int]], n_turns: int, context: str
) -> list[tuple[int, int]]:
    """Drop out-of-range evidence ranges, keeping the decision."""
    kept = []
    for start, end in evidence:
        if 0 <= start <= end < n_turns:
            kept.append((start, end))
        else:
            log.warning("%s: dropping out-of-range evidence (%s, %s)", context, start, end)
    return kept


def silver_label(
    transcript: Transcript,
    station: Station,
    mode: str,
    gateway: Gateway,
    seed: int | None = None,
) -> LabelSet:
    """One silver LabelEntry per station criterion."""
    if transcript.station_id != station.id:
        raise UsageError(
            f"transcript {transcript.id!r} belongs to station "
            f"{transcript.station_id!r}, not {station.id!r}"
        )
    if mode not in MODE_TEMPLATES:
        raise UsageError(f"unknown strictness mode {mode!r}")
    transcript_block = format_transcript_block(transcript.turns)
    entries: dict[str, LabelEntry] = {}
    for criterion in station.criteria:
        prompt = render_template(
            MODE_TEMPLATES[mode],
            criterion_text=criterion.text,
            transcript_block=transcript_block,
        )
        try:
            record, _ = gateway.complete_structured_prompt(
                prompt, JUDGMENT_SCHEMA, seed=seed
            )
        except StructuredOutputError:
            entries[criterion.id] = LabelEntry(
                decision=False,
                justification="labeling failed",
                evidence=[],
                source="Silver",
                flagged=True,
            )
            continue
        evidence = clamp_evidence(
            record["evidence"],
            len(transcript.turns),
            f"{transcript.id}/{criterion.id}",
        )
        entries[criterion.id] = LabelEntry(
            decision=record["decision"],
            justification=record["justification"],
            evidence=evidence,
            source="Silver",
        )
    return LabelSet(transcript_id=transcript.id, mode=mode, entries=entries)


def self_consistency(
    transcript: Transcript,
    station: Station,
    mode: str,
    runs: int,
    gateway: Gateway,
    seed: int = 0,
) -> AgreementReport:
    """Label the transcript ``runs`` times with distinct seeds and report
    pairwise-averaged Cohen's kappa over the decision vectors."""
    if runs < 2:
        raise UsageError("self-consistency requires at least 2 runs")
    order = station.criterion_ids()
    vectors = []
    for i in range(runs):
        labels = silver_label(transcript, station, mode, gateway, seed=seed + i)
        vectors.append([labels.entries[cid].decision for cid in order])
    reports = [cohen_kappa(a, b) for a, b in combinations(vectors, 2)]
    k = len(reports)
    return AgreementReport(
        kappa=sum(r.kappa for r in reports) / k,
        observed=sum(r.observed for r in reports) / k,
        expected=sum(r.expected for r in reports) / k,
        n=len(order),
    )


def apply_review(labels: LabelSet, overrides: list[ReviewEvent]) -> LabelSet:
    """Apply review overrides, last writer wins; returns a new LabelSet.

    Non-targeted entries are untouched.  Replaying the accumulated review
    log onto the original silver set reproduces the reviewed set exactly.
    """
    entries = {
        cid: LabelEntry(
            decision=e.decision,
            justification=e.justification,
            evidence=list(e.evidence),
            source=e.source,
            flagged=e.flagged,
        )
        for cid, e in labels.entries.items()
    }
    for event in overrides:
        if event.criterion_id not in entries:
            raise UnknownCriterion(event.criterion_id)
        entry = entries[event.criterion_id]
        entry.decision = event.new_decision
        entry.source = "Reviewed"
        entry.flagged = False
    return LabelSet(
        transcript_id=labels.transcript_id,
        mode=labels.mode,
        entries=entries,
        review_log=list(labels.review_log) + list(overrides),
    )
