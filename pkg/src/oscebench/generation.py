"""Transcript generation: reordering, leaf identification, perturbation,
sliced generation and boundary polishing.

The LLM proposes; validators enforce.  Ordering proposals must be an exact
permutation that respects declared dependencies, with a deterministic
topological-sort fallback after bounded re-prompting.  Perturbation only
ever touches leaf criteria, with a seeded sample of size
round-half-up(rate x |leaves|).
"""

from __future__ import annotations

import heapq
import json
import logging
import random
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .errors import EmptyLeafSet, EmptySegment, GatewayError, StructuredOutputError, UsageError
from .gateway import Gateway, SchemaField, StructuredSchema
from .models import GenerationProvenance, Station, Transcript, Turn
from .prompts import (
    format_criteria_block,
    format_slice_block,
    format_transcript_block,
    render_template,
)

log = logging.getLogger(__name__)


@dataclass
class GenerationConfig:
    slice_size: int = 4
    perturbation_rate: float = 0.5
    seed: int = 0
    model_id: str = "mock-model"
    reorder_reprompts: int = 2

    def __post_init__(self):
        if self.slice_size < 1:
            raise UsageError("slice size must be >= 1")
        if not (0.0 <= self.perturbation_rate <= 1.0):
            raise UsageError("perturbation rate must be in [0, 1]")


@dataclass
class OrderingResult:
    order: list[str]
    strategy: str
    phases: dict[str, str] = field(default_factory=dict)
    fallback_fired: bool = False
    reprompts: int = 0


def ordering_violations(order: list[str], station: Station) -> list[str]:
    """Human-readable constraint violations of a proposed ordering."""
    problems = []
    expected = station.criterion_ids()
    if sorted(order) != sorted(expected):
        problems.append("the proposal is not a permutation of the station's criterion ids")
        return problems
    position = {cid: i for i, cid in enumerate(order)}
    for criterion in station.criteria:
        for dep in sorted(criterion.dependencies):
            if position[dep] >= position[criterion.id]:
                problems.append(
                    f"criterion {criterion.id} must come after its dependency {dep}"
                )
    return problems


def fallback_order(station: Station, proposed: list[str] | None = None) -> list[str]:
    """Stable topological sort of the declared dependency DAG.

    Among ready criteria, the one earliest in the proposed order (station
    order when no usable proposal exists) is emitted first, preserving the
    model's relative order where legal.
    """
    base = station.criterion_ids()
    if proposed and sorted(proposed) == sorted(base):
        preference = {cid: i for i, cid in enumerate(proposed)}
    else:
        preference = {cid: i for i, cid in enumerate(base)}
    indegree = {c.id: len(c.dependencies) for c in station.criteria}
    dependents: dict[str, list[str]] = {cid: [] for cid in base}
    for criterion in station.criteria:
        for dep in criterion.dependencies:
            dependents[dep].append(criterion.id)
    ready = [(preference[cid], cid) for cid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        _, cid = heapq.heappop(ready)
        order.append(cid)
        for dependent in dependents[cid]:
            indegree[dependent] -= 1
            if indegree[dependent] == 0:
                heapq.heappush(ready, (preference[dependent], dependent))
    return order


def reorder_criteria(station: Station, gateway: Gateway, config: GenerationConfig) -> OrderingResult:
    """LLM-proposed criteria ordering, validated, with deterministic fallback."""
    template = (
        "generation/reorder_oiap.txt"
        if station.ordering_strategy == "OIAP"
        else "generation/reorder_context.txt"
    )
    fields = [SchemaField("order", "list")]
    if station.ordering_strategy == "OIAP":
        fields.append(SchemaField("phases", "object", required=False))
    schema = StructuredSchema(fields)
    prompt = render_template(
        template,
        doctor_sheet=format_sheet(station.doctor_sheet),
        patient_sheet=format_sheet(station.patient_sheet),
        criteria_block=format_criteria_block(station.criteria),
    )
    proposed: list[str] | None = None
    phases: dict[str, str] = {}
    reprompts = 0
    current_prompt = prompt
    for attempt in range(config.reorder_reprompts + 1):
        try:
            record, _ = gateway.complete_structured_prompt(
                current_prompt, schema, seed=config.seed
            )
        except StructuredOutputError:
            break
        proposed = [str(x) for x in record["order"]]
        phases = {str(k): str(v) for k, v in record.get("phases", {}).items()}
        problems = ordering_violations(proposed, station)
        if not problems:
            return OrderingResult(
                order=proposed,
                strategy=station.ordering_strategy,
                phases=phases,
                fallback_fired=False,
                reprompts=reprompts,
            )
        if attempt < config.reorder_reprompts:
            reprompts = attempt + 1
            current_prompt = (
                prompt
                + "\n\nVotre proposition précédente était invalide :\n- "
                + "\n- ".join(problems)
                + "\nProposez un nouvel ordre corrigé."
            )
    order = fallback_order(station, proposed)
    log.warning("reorder fallback fired for station %s", station.id)
    return OrderingResult(
        order=order,
        strategy=station.ordering_strategy,
        phases=phases,
        fallback_fired=True,
        reprompts=reprompts,
    )


def format_sheet(sheet: dict[str, str]) -> str:
    return "\n".join(f"{key}: {value}" for key, value in sheet.items())


def identify_leaves(station: Station, gateway: Gateway, config: GenerationConfig) -> set[str]:
    """Criteria eligible for perturbation.

    A criterion qualifies only if no other criterion depends on it AND it
    depends on nothing (the conservative intersection), and the model also
    classifies it as a leaf.  Discrepancies between the model's view and the
    declared edges are logged, not honored.
    """
    prompt = render_template(
        "generation/leaves.txt", criteria_block=format_criteria_block(station.criteria)
    )
    schema = StructuredSchema([SchemaField("leaves", "list")])
    try:
        record, _ = gateway.complete_structured_prompt(prompt, schema, seed=config.seed)
    except StructuredOutputError as exc:
        raise GatewayError(f"leaf identification failed: {exc}") from exc
    model_leaves = {str(x) for x in record["leaves"]}
    eligible = {
        c.id
        for c in station.criteria
        if not c.dependencies and not station.dependents_of(c.id)
    }
    for cid in sorted(model_leaves - eligible):
        log.info(
            "station %s: model marked %s as leaf but declared edges disagree",
            station.id,
            cid,
        )
    for cid in sorted(eligible - model_leaves):
        log.info(
            "station %s: %s is edge-free but the model did not mark it as leaf",
            station.id,
            cid,
        )
    return eligible & model_leaves


def round_half_up_count(rate: float, n: int) -> int:
    return int(
        (Decimal(str(rate)) * n).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    )


@dataclass
class PerturbationPlan:
    rate: float
    seed: int
    selected: list[str]
    perturbed_text: dict[str, str]

    def plan_id(self) -> str:
        import hashlib

        payload = json.dumps(
            [self.rate, self.seed, self.selected], sort_keys=True
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def to_dict(self) -> dict:
        return {
            "plan_id": self.plan_id(),
            "rate": self.rate,
            "seed": self.seed,
            "selected": list(self.selected),
            "perturbed_text": dict(sorted(self.perturbed_text.items())),
        }

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )


def select_for_perturbation(leaves: set[str], rate: float, seed: int) -> list[str]:
    """Seeded uniform sample without replacement; size round-half-up(rate x |leaves|)."""
    if rate > 0 and not leaves:
        raise EmptyLeafSet("perturbation requested but the station has no leaf criteria")
    count = round_half_up_count(rate, len(leaves))
    rng = random.Random(seed)
    return sorted(rng.sample(sorted(leaves), count))


def plan_perturbation(
    station: Station, leaves: set[str], config: GenerationConfig, gateway: Gateway
) -> PerturbationPlan:
    selected = select_for_perturbation(leaves, config.perturbation_rate, config.seed)
    schema = StructuredSchema([SchemaField("perturbed_text", "string")])
    perturbed: dict[str, str] = {}
    for cid in selected:
        prompt = render_template(
            "generation/perturb.txt", criterion_text=station.criterion(cid).text
        )
        try:
            record, _ = gateway.complete_structured_prompt(prompt, schema, seed=config.seed)
        except StructuredOutputError as exc:
            raise GatewayError(f"perturbation of {cid} failed: {exc}") from exc
        perturbed[cid] = record["perturbed_text"]
    return PerturbationPlan(
        rate=config.perturbation_rate,
        seed=config.seed,
        selected=selected,
        perturbed_text=perturbed,
    )


def slice_criteria(order: list[str], slice_size: int) -> list[list[str]]:
    return [order[i : i + slice_size] for i in range(0, len(order), slice_size)]


def generate_transcript(
    station: Station,
    ordering: OrderingResult,
    plan: PerturbationPlan,
    config: GenerationConfig,
    gateway: Gateway,
    transcript_id: str,
    corpus_tag: str,
) -> Transcript:
    """Generate the dialogue slice by slice and concatenate the segments."""
    slices = slice_criteria(ordering.order, config.slice_size)
    schema = StructuredSchema([SchemaField("turns", "list")])
    turns: list[Turn] = []
    slice_turn_spans: list[list[int]] = []
    for slice_ids in slices:
        items = [
            (cid, plan.perturbed_text.get(cid, station.criterion(cid).text))
            for cid in slice_ids
        ]
        previous = (
            format_transcript_block(turns) if turns else "(début de la consultation)"
        )
        prompt = render_template(
            "generation/slice.txt",
            doctor_sheet=format_sheet(station.doctor_sheet),
            patient_sheet=format_sheet(station.patient_sheet),
            previous_dialogue=previous,
            criteria_slice=format_slice_block(items),
        )
        segment = None
        for attempt in range(2):
            try:
                record, _ = gateway.complete_structured_prompt(
                    prompt, schema, temperature=0.7, seed=config.seed
                )
            except StructuredOutputError as exc:
                raise GatewayError(f"segment generation failed: {exc}") from exc
            candidate = _parse_turns(record["turns"])
            if candidate:
                segment = candidate
                break
            prompt += "\nLa réponse précédente ne contenait aucun tour de parole."
        if segment is None:
            raise EmptySegment(f"no turns generated for slice {slice_ids}")
        start = len(turns)
        for role, text in segment:
            turns.append(Turn(index=len(turns), role=role, text=text))
        slice_turn_spans.append([start, len(turns) - 1])
    provenance = GenerationProvenance(
        slice_size=config.slice_size,
        seed=config.seed,
        plan_id=plan.plan_id(),
        slices=slices,
    )
    transcript = Transcript(
        id=transcript_id,
        station_id=station.id,
        turns=turns,
        provenance=provenance,
        corpus_tag=corpus_tag,
    )
    transcript.slice_turn_spans = slice_turn_spans  # used by polish_boundaries
    return transcript


def _parse_turns(raw: list) -> list[tuple[str, str]]:
    turns = []
    for item in raw:
        if not isinstance(item, dict):
            continue
        role = item.get("role")
        text = item.get("text")
        if role in ("Doctor", "Patient") and isinstance(text, str) and text:
            turns.append((role, text))
    return turns


def polish_boundaries(
    transcript: Transcript, gateway: Gateway, config: GenerationConfig
) -> Transcript:
    """Let the model improve the opening and closing segments only.

    Middle-slice turns must come back byte-identical (as a contiguous
    block); otherwise the polish is rejected, the original kept, and the
    anomaly logged.  Turn indices are re-normalized.
    """
    if not transcript.turns:
        raise UsageError("cannot polish an empty transcript")
    spans = getattr(transcript, "slice_turn_spans", None)
    if not spans:
        spans = [[0, len(transcript.turns) - 1]]
    first_span, last_span = spans[0], spans[-1]
    prompt = render_template(
        "generation/polish.txt",
        transcript_block=format_transcript_block(transcript.turns),
        first_span=f"{first_span[0]}-{first_span[1]}",
        last_span=f"{last_span[0]}-{last_span[1]}",
    )
    schema = StructuredSchema([SchemaField("turns", "list")])
    try:
        record, _ = gateway.complete_structured_prompt(
            prompt, schema, temperature=0.7, seed=config.seed
        )
    except StructuredOutputError as exc:
        raise GatewayError(f"polish failed: {exc}") from exc
    polished = _parse_turns(record["turns"])
    if not polished:
        log.warning("polish returned no turns for %s; keeping original", transcript.id)
        return transcript
    middle = [
        (t.role, t.text)
        for t in transcript.turns[first_span[1] + 1 : last_span[0]]
    ]
    if middle and len(spans) > 1:
        anchor = _find_subsequence(polished, middle)
        if anchor is None:
            log.warning(
                "polish for %s altered middle-slice turns; keeping original",
                transcript.id,
            )
            return transcript
    turns = [
        Turn(index=i, role=role, text=text) for i, (role, text) in enumerate(polished)
    ]
    result = Transcript(
        id=transcript.id,
        station_id=transcript.station_id,
        turns=turns,
        provenance=transcript.provenance,
        corpus_tag=transcript.corpus_tag,
    )
    return result


def _find_subsequence(haystack: list[tuple[str, str]], needle: list[tuple[str, str]]):
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i : i + len(needle)] == needle:
            return i
    return None
