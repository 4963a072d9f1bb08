"""LLM-as-judge evaluation of transcripts against checklist criteria.

Three prompting strategies (zero-shot, few-shot, multi-step) composed with
two optional helper tools: criterion decomposition (CD), which judges
sub-criteria independently and aggregates their decisions through the
operator tree, and medical definitions (MD), which injects matched concept
definitions into the task description before any strategy call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import expr as crit_expr
from .errors import (
    ExemplarLeakage,
    MissingReference,
    StructuredOutputError,
    UsageError,
)
from .gateway import JUDGMENT_SCHEMA, Gateway
from .meddefs import Lexicon, inject_definitions, match_terms
from .metrics import AccuracyReport, accuracy
from .models import Criterion, Station, Transcript
from .prompts import (
    TEMPLATE_VERSION,
    format_empty_transcript_block,
    format_transcript_block,
    load_template,
    render_template,
)

STRATEGIES = ("ZeroShot", "FewShot", "MultiStep")
STRATEGY_LABELS = {
    "ZeroShot": "zero-shot",
    "FewShot": "few-shot",
    "MultiStep": "multi-step",
}
TOOLS = ("CD", "MD")


def tools_label(tools: frozenset[str]) -> str:
    if not tools:
        return "direct"
    return "+".join(t for t in ("CD", "MD") if t in tools)


@dataclass(frozen=True)
class Exemplar:
    transcript_id: str
    criterion_text: str
    decision: bool
    justification: str


@dataclass(frozen=True)
class EvalConfig:
    model_id: str
    strategy: str = "ZeroShot"
    tools: frozenset[str] = frozenset()
    exemplars: tuple[Exemplar, ...] = ()
    temperature: float = 0.2
    seed: int | None = None
    template_version: str = TEMPLATE_VERSION
    run_id: str = ""

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise UsageError(f"unknown strategy {self.strategy!r}")
        for tool in self.tools:
            if tool not in TOOLS:
                raise UsageError(f"unknown tool {tool!r}")
        if self.strategy == "FewShot" and not self.exemplars:
            raise UsageError("few-shot strategy requires at least one exemplar")
        if self.strategy != "FewShot" and self.exemplars:
            raise UsageError("exemplars are only valid with the few-shot strategy")


@dataclass
class Judgment:
    criterion_id: str
    decision: bool
    justification: str
    evidence: list[tuple[int, int]] = field(default_factory=list)
    strategy: str = "ZeroShot"
    tools: frozenset[str] = frozenset()
    model_id: str = ""
    attempts: int = 1
    flagged: bool = False
    exemplar_ids: list[str] = field(default_factory=list)
    stage1_ranges: list[tuple[int, int]] | None = None
    stage2_evidence: list[tuple[int, int]] | None = None
    cd_fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "criterion_id": self.criterion_id,
            "decision": self.decision,
            "justification": self.justification,
            "evidence": [list(r) for r in self.evidence],
            "strategy": self.strategy,
            "tools": sorted(self.tools),
            "model_id": self.model_id,
            "attempts": self.attempts,
            "flagged": self.flagged,
            "exemplar_ids": self.exemplar_ids,
            "stage1_ranges": None
            if self.stage1_ranges is None
            else [list(r) for r in self.stage1_ranges],
            "stage2_evidence": None
            if self.stage2_evidence is None
            else [list(r) for r in self.stage2_evidence],
            "cd_fallback": self.cd_fallback,
        }


def default_task_description() -> str:
    return load_template("evaluation/task_description.txt").strip()


def _failure_judgment(criterion_id: str, config: EvalConfig, attempts: int) -> Judgment:
    return Judgment(
        criterion_id=criterion_id,
        decision=False,
        justification="",
        evidence=[],
        strategy=config.strategy,
        tools=config.tools,
        model_id=config.model_id,
        attempts=attempts,
        flagged=True,
    )


def _structured_judgment(
    prompt: str,
    criterion_id: str,
    transcript: Transcript,
    config: EvalConfig,
    gateway: Gateway,
) -> Judgment:
    from .labeling import clamp_evidence

    try:
        record, attempts = gateway.complete_structured_prompt(
            prompt, JUDGMENT_SCHEMA, temperature=config.temperature, seed=config.seed
        )
    except StructuredOutputError as exc:
        return _failure_judgment(criterion_id, config, attempts=len(exc.attempts))
    evidence = clamp_evidence(
        record["evidence"], len(transcript.turns), f"{transcript.id}/{criterion_id}"
    )
    return Judgment(
        criterion_id=criterion_id,
        decision=record["decision"],
        justification=record["justification"],
        evidence=evidence,
        strategy=config.strategy,
        tools=config.tools,
        model_id=config.model_id,
        attempts=attempts,
    )


def judge_zero_shot(
    transcript: Transcript,
    criterion: Criterion,
    config: EvalConfig,
    gateway: Gateway,
    task_description: str | None = None,
) -> Judgment:
    if not criterion.text:
        raise UsageError("criterion text must be non-empty")
    prompt = render_template(
        "evaluation/zero_shot.txt",
        task_description=task_description or default_task_description(),
        criterion_text=criterion.text,
        transcript_block=format_transcript_block(transcript.turns),
    )
    return _structured_judgment(prompt, criterion.id, transcript, config, gateway)


def format_examples_block(exemplars: tuple[Exemplar, ...]) -> str:
    lines = []
    for i, ex in enumerate(exemplars, 1):
        verdict = "true" if ex.decision else "false"
        lines.append(
            f"Exemple {i} — critère : {ex.criterion_text}\n"
            f"  décision : {verdict}\n  justification : {ex.justification}"
        )
    return "\n".join(lines)


def judge_few_shot(
    transcript: Transcript,
    criterion: Criterion,
    config: EvalConfig,
    gateway: Gateway,
    task_description: str | None = None,
) -> Judgment:
    if not criterion.text:
        raise UsageError("criterion text must be non-empty")
    if not config.exemplars:
        raise UsageError("few-shot judging requires at least one exemplar")
    for ex in config.exemplars:
        if ex.transcript_id == transcript.id:
            raise ExemplarLeakage(
                f"exemplar from transcript {ex.transcript_id!r} used while "
                "evaluating that same transcript"
            )
    prompt = render_template(
        "evaluation/few_shot.txt",
        task_description=task_description or default_task_description(),
        examples_block=format_examples_block(config.exemplars),
        criterion_text=criterion.text,
        transcript_block=format_transcript_block(transcript.turns),
    )
    judgment = _structured_judgment(prompt, criterion.id, transcript, config, gateway)
    judgment.exemplar_ids = [ex.transcript_id for ex in config.exemplars]
    return judgment


def _ranges_to_indices(ranges: list[tuple[int, int]]) -> set[int]:
    indices: set[int] = set()
    for start, end in ranges:
        indices.update(range(start, end + 1))
    return indices


def _indices_to_ranges(indices: set[int]) -> list[tuple[int, int]]:
    ranges: list[tuple[int, int]] = []
    for i in sorted(indices):
        if ranges and i == ranges[-1][1] + 1:
            ranges[-1] = (ranges[-1][0], i)
        else:
            ranges.append((i, i))
    return ranges


def judge_multi_step(
    transcript: Transcript,
    criterion: Criterion,
    config: EvalConfig,
    gateway: Gateway,
    task_description: str | None = None,
) -> Judgment:
    """Two stages: retrieve relevant turn ranges, then judge the excerpt.

    Final evidence is always contained in the stage-1 ranges; both stage
    outputs are kept on the Judgment for error analysis.
    """
    from .labeling import clamp_evidence

    if not criterion.text:
        raise UsageError("criterion text must be non-empty")
    extract_prompt = render_template(
        "evaluation/multistep_extract.txt",
        criterion_text=criterion.text,
        transcript_block=format_transcript_block(transcript.turns),
    )
    from .gateway import SchemaField, StructuredSchema

    extract_schema = StructuredSchema([SchemaField("relevant", "ranges")])
    try:
        record, stage1_attempts = gateway.complete_structured_prompt(
            extract_prompt,
            extract_schema,
            temperature=config.temperature,
            seed=config.seed,
        )
    except StructuredOutputError as exc:
        judgment = _failure_judgment(criterion.id, config, attempts=len(exc.attempts))
        judgment.justification = "stage 1 (segment extraction) failed"
        return judgment
    stage1 = clamp_evidence(
        record["relevant"], len(transcript.turns), f"{transcript.id}/{criterion.id}/stage1"
    )
    stage1_indices = _ranges_to_indices(stage1)
    if stage1_indices:
        excerpt = [t for t in transcript.turns if t.index in stage1_indices]
        transcript_block = format_transcript_block(excerpt)
    else:
        transcript_block = format_empty_transcript_block()
    judge_prompt = render_template(
        "evaluation/multistep_judge.txt",
        task_description=task_description or default_task_description(),
        criterion_text=criterion.text,
        transcript_block=transcript_block,
    )
    judgment = _structured_judgment(
        judge_prompt, criterion.id, transcript, config, gateway
    )
    judgment.attempts += stage1_attempts
    judgment.stage1_ranges = stage1
    judgment.stage2_evidence = list(judgment.evidence)
    final = _ranges_to_indices(judgment.evidence) & stage1_indices
    judgment.evidence = _indices_to_ranges(final)
    return judgment


_STRATEGY_FUNCS = {
    "ZeroShot": judge_zero_shot,
    "FewShot": judge_few_shot,
    "MultiStep": judge_multi_step,
}


def judge(
    transcript: Transcript,
    criterion: Criterion,
    config: EvalConfig,
    gateway: Gateway,
    lexicon: Lexicon | None = None,
    decompose_cache: crit_expr.DecompositionCache | None = None,
) -> Judgment:
    """Strategy call with the configured helper tools composed in.

    With no tools enabled this is byte-identical to the bare strategy call.
    """
    strategy_func = _STRATEGY_FUNCS[config.strategy]
    task_description = default_task_description()
    if "MD" in config.tools:
        if lexicon is None:
            raise UsageError("MD tool enabled but no lexicon supplied")
        matches = match_terms(criterion.text, lexicon)
        task_description = inject_definitions(task_description, matches, lexicon)
    if "CD" not in config.tools:
        return strategy_func(
            transcript, criterion, config, gateway, task_description=task_description
        )
    cached = decompose_cache.get(criterion.text) if decompose_cache else None
    if cached is not None:
        decomposed, fallback = cached, False
    else:
        decomposed, fallback = crit_expr.decompose_with_fallback(criterion, gateway)
        if decompose_cache is not None and not fallback:
            decompose_cache.put(criterion.text, decomposed)
    sub_judgments: dict[str, Judgment] = {}
    attempts = 0
    any_flagged = False
    for atom_id in crit_expr.atom_ids(decomposed.expr):
        sub_criterion = Criterion(
            id=f"{criterion.id}.{atom_id}",
            text=decomposed.sub_criteria[atom_id],
        )
        sub = strategy_func(
            transcript, sub_criterion, config, gateway, task_description=task_description
        )
        attempts += sub.attempts
        any_flagged = any_flagged or sub.flagged
        sub_judgments[atom_id] = sub
    combined = crit_expr.aggregate(decomposed, sub_judgments)
    return Judgment(
        criterion_id=criterion.id,
        decision=combined.decision,
        justification=combined.justification,
        evidence=combined.evidence,
        strategy=config.strategy,
        tools=config.tools,
        model_id=config.model_id,
        attempts=attempts,
        flagged=any_flagged,
        cd_fallback=fallback,
    )


# --- benchmark runs -------------------------------------------------------------

@dataclass
class RunReport:
    run_id: str
    config: EvalConfig
    corpus_tag: str
    judgments: dict[tuple[str, str], Judgment]  # (transcript_id, criterion_id)
    overall: AccuracyReport
    per_station: dict[str, AccuracyReport]
    format_failure_rate: float

    def summary_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "model_id": self.config.model_id,
            "strategy": STRATEGY_LABELS[self.config.strategy],
            "tools": tools_label(self.config.tools),
            "template_version": self.config.template_version,
            "corpus": self.corpus_tag,
            "accuracy": self.overall.rendered(),
            "confusion": {
                "tp": self.overall.tp,
                "tn": self.overall.tn,
                "fp": self.overall.fp,
                "fn": self.overall.fn,
            },
            "n": self.overall.n,
            "format_failure_rate": round(self.format_failure_rate, 4),
            "per_station": {
                sid: {"accuracy": rep.rendered(), "n": rep.n}
                for sid, rep in sorted(self.per_station.items())
            },
        }


def run_benchmark(
    stations: dict[str, Station],
    transcripts: list[Transcript],
    reference: dict[str, dict[str, bool]],  # transcript_id -> criterion -> decision
    configs: list[EvalConfig],
    gateway: Gateway,
    lexicon: Lexicon | None = None,
    decompose_cache: crit_expr.DecompositionCache | None = None,
    out_dir: Path | None = None,
) -> list[RunReport]:
    """One RunReport per config, judged deterministically in sorted order."""
    ordered = sorted(transcripts, key=lambda t: (t.station_id, t.id))
    for transcript in ordered:
        station = stations[transcript.station_id]
        ref = reference.get(transcript.id, {})
        for cid in station.criterion_ids():
            if cid not in ref:
                raise MissingReference(f"{transcript.id}:{cid}")
    reports = []
    for config in configs:
        corpus_tags = sorted({t.corpus_tag for t in ordered})
        corpus_tag = corpus_tags[0] if len(corpus_tags) == 1 else "All"
        judgments: dict[tuple[str, str], Judgment] = {}
        for transcript in ordered:
            station = stations[transcript.station_id]
            for criterion in station.criteria:
                judgments[(transcript.id, criterion.id)] = judge(
                    transcript,
                    criterion,
                    config,
                    gateway,
                    lexicon=lexicon,
                    decompose_cache=decompose_cache,
                )
        decisions = {
            f"{tid}:{cid}": j.decision for (tid, cid), j in judgments.items()
        }
        refs = {
            f"{t.id}:{cid}": reference[t.id][cid]
            for t in ordered
            for cid in stations[t.station_id].criterion_ids()
        }
        overall = accuracy(decisions, refs)
        per_station: dict[str, AccuracyReport] = {}
        for sid in sorted({t.station_id for t in ordered}):
            ids = [t.id for t in ordered if t.station_id == sid]
            sub_refs = {
                key: value
                for key, value in refs.items()
                if key.split(":", 1)[0] in ids
            }
            sub_dec = {key: decisions[key] for key in sub_refs}
            per_station[sid] = accuracy(sub_dec, sub_refs)
        n_flagged = sum(1 for j in judgments.values() if j.flagged)
        report = RunReport(
            run_id=config.run_id or f"{config.model_id}-{STRATEGY_LABELS[config.strategy]}-{tools_label(config.tools)}",
            config=config,
            corpus_tag=corpus_tag,
            judgments=judgments,
            overall=overall,
            per_station=per_station,
            format_failure_rate=n_flagged / len(judgments) if judgments else 0.0,
        )
        reports.append(report)
        if out_dir is not None:
            write_run_report(report, Path(out_dir))
    return reports


def write_run_report(report: RunReport, out_dir: Path) -> None:
    run_dir = out_dir / report.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for (tid, cid) in sorted(report.judgments):
        payload = {"transcript_id": tid, **report.judgments[(tid, cid)].to_dict()}
        lines.append(json.dumps(payload, sort_keys=True, ensure_ascii=False))
    (run_dir / "judgments.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (run_dir / "summary.json").write_text(
        json.dumps(report.summary_dict(), sort_keys=True, indent=2, ensure_ascii=False)
        + "\n",
        encoding="utf-8",
    )


def load_eval_config(path: Path | str) -> tuple[EvalConfig, str]:
    """Load a run config file; returns (config, corpus filter tag)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    strategy_by_label = {v: k for k, v in STRATEGY_LABELS.items()}
    strategy = data.get("strategy", "zero-shot")
    strategy = strategy_by_label.get(strategy, strategy)
    exemplars = tuple(
        Exemplar(
            transcript_id=e["transcript_id"],
            criterion_text=e["criterion_text"],
            decision=bool(e["decision"]),
            justification=e.get("justification", ""),
        )
        for e in data.get("examples", [])
    )
    config = EvalConfig(
        model_id=data.get("model_id", "mock-model"),
        strategy=strategy,
        tools=frozenset(data.get("tools", [])),
        exemplars=exemplars,
        temperature=float(data.get("temperature", 0.2)),
        seed=data.get("seed"),
        run_id=data.get("run_id", ""),
    )
    return config, data.get("corpus", "All")
