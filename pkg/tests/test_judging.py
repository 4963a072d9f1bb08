"""Judge strategies, helper-tool composition, and benchmark runs."""

import json

import pytest

from oscebench.errors import ExemplarLeakage, MissingReference, UsageError
from oscebench.expr import DecompositionCache
from oscebench.generation import (
    GenerationConfig,
    PerturbationPlan,
    generate_transcript,
    reorder_criteria,
)
from oscebench.judging import (
    EvalConfig,
    Exemplar,
    judge,
    judge_few_shot,
    judge_multi_step,
    judge_zero_shot,
    load_eval_config,
    run_benchmark,
    tools_label,
)
from oscebench.meddefs import build_lexicon
from oscebench.mockllm import PERTURBED_SUFFIX
from oscebench.models import Criterion, Station

COMPOSITE_TEXT = "Interroge sur l'impact professionnel ou l'impact familial du trouble"


def composite_station(station_id="700"):
    return Station(
        id=station_id,
        doctor_sheet={"situation": "Consultation d'essai."},
        patient_sheet={"contexte": "Patient d'essai."},
        criteria=[
            Criterion(id="c01", text=COMPOSITE_TEXT),
            Criterion(id="c02", text="Recherche une allergie médicamenteuse connue"),
            Criterion(id="c03", text="Explique le plan de prise en charge proposé"),
        ],
    )


def build_transcript(station, gateway, perturbed=None, tag="Unperturbed"):
    config = GenerationConfig(slice_size=4, seed=9)
    ordering = reorder_criteria(station, gateway, config)
    plan = PerturbationPlan(
        rate=0.5 if perturbed else 0.0,
        seed=9,
        selected=sorted(perturbed or []),
        perturbed_text=perturbed or {},
    )
    return generate_transcript(
        station, ordering, plan, config, gateway,
        transcript_id=f"{station.id}-{tag.lower()}", corpus_tag=tag,
    )


def perturb_text(text):
    words = text.split()
    return " ".join(words[: (len(words) + 1) // 2]) + " " + PERTURBED_SUFFIX


# --- config -----------------------------------------------------------------------


def test_eval_config_validation():
    with pytest.raises(UsageError):
        EvalConfig(model_id="m", strategy="chain-of-thought")
    with pytest.raises(UsageError):
        EvalConfig(model_id="m", tools=frozenset({"RAG"}))
    with pytest.raises(UsageError):
        EvalConfig(model_id="m", strategy="FewShot")
    exemplar = Exemplar("t0", "critère", True, "ok")
    with pytest.raises(UsageError):
        EvalConfig(model_id="m", strategy="ZeroShot", exemplars=(exemplar,))
    EvalConfig(model_id="m", strategy="FewShot", exemplars=(exemplar,))


def test_tools_label():
    assert tools_label(frozenset()) == "direct"
    assert tools_label(frozenset({"CD"})) == "CD"
    assert tools_label(frozenset({"MD"})) == "MD"
    assert tools_label(frozenset({"MD", "CD"})) == "CD+MD"


def test_load_eval_config(fixtures_dir):
    config, corpus = load_eval_config(fixtures_dir / "runs" / "zs.json")
    assert config.strategy == "ZeroShot"
    assert config.tools == frozenset()
    assert config.run_id == "zs-direct"
    assert corpus == "All"
    config, corpus = load_eval_config(fixtures_dir / "runs" / "zs_cd.json")
    assert config.tools == frozenset({"CD"})
    assert corpus == "Perturbed"


# --- strategies -------------------------------------------------------------------


def test_zero_shot_decisions_track_transcript_content(gateway):
    station = composite_station()
    transcript = build_transcript(station, gateway)
    config = EvalConfig(model_id="mock-model")
    for criterion in station.criteria:
        judgment = judge_zero_shot(transcript, criterion, config, gateway)
        assert judgment.decision is True
        assert judgment.evidence
    perturbed = build_transcript(
        station, gateway,
        perturbed={"c02": perturb_text(station.criterion("c02").text)},
        tag="Perturbed",
    )
    judgment = judge_zero_shot(
        perturbed, station.criterion("c02"), config, gateway
    )
    assert judgment.decision is False


def test_judge_without_tools_is_identical_to_bare_strategy(gateway):
    station = composite_station()
    transcript = build_transcript(station, gateway)
    config = EvalConfig(model_id="mock-model")
    criterion = station.criterion("c02")
    via_judge = judge(transcript, criterion, config, gateway)
    direct = judge_zero_shot(transcript, criterion, config, gateway)
    assert via_judge.to_dict() == direct.to_dict()


def test_few_shot_records_exemplars_and_blocks_leakage(gateway):
    station = composite_station()
    transcript = build_transcript(station, gateway)
    exemplar = Exemplar("autre-transcription", "critère d'exemple", True, "vu")
    config = EvalConfig(
        model_id="mock-model", strategy="FewShot", exemplars=(exemplar,)
    )
    judgment = judge_few_shot(transcript, station.criterion("c02"), config, gateway)
    assert judgment.decision is True
    assert judgment.exemplar_ids == ["autre-transcription"]
    leaky = EvalConfig(
        model_id="mock-model",
        strategy="FewShot",
        exemplars=(Exemplar(transcript.id, "critère", True, "vu"),),
    )
    with pytest.raises(ExemplarLeakage):
        judge_few_shot(transcript, station.criterion("c02"), leaky, gateway)


def test_multi_step_evidence_contained_in_stage1(gateway):
    station = composite_station()
    transcript = build_transcript(station, gateway)
    config = EvalConfig(model_id="mock-model", strategy="MultiStep")
    for criterion in station.criteria:
        judgment = judge_multi_step(transcript, criterion, config, gateway)
        stage1 = {
            i for start, end in judgment.stage1_ranges for i in range(start, end + 1)
        }
        final = {
            i for start, end in judgment.evidence for i in range(start, end + 1)
        }
        assert final <= stage1
        assert judgment.attempts >= 2  # both stages count


def test_multi_step_empty_retrieval_still_decides(make_gateway):
    station = composite_station()
    gw_generate = make_gateway()
    transcript = build_transcript(station, gw_generate)
    gw = make_gateway(
        script=[("TASK: EXTRACT_SEGMENTS", json.dumps({"relevant": []}))]
    )
    config = EvalConfig(model_id="mock-model", strategy="MultiStep")
    judgment = judge_multi_step(transcript, station.criterion("c01"), config, gw)
    assert judgment.stage1_ranges == []
    assert judgment.evidence == []
    assert judgment.decision is False
    assert judgment.flagged is False


# --- helper tools ------------------------------------------------------------------


def test_cd_aggregates_sub_criteria_through_the_operator_tree(gateway, tmp_path):
    station = composite_station()
    config = EvalConfig(model_id="mock-model", tools=frozenset({"CD"}))
    cache = DecompositionCache(tmp_path / "decompositions.json")
    # perturb the composite criterion: only its first disjunct survives
    perturbed = build_transcript(
        station, gateway,
        perturbed={"c01": perturb_text(COMPOSITE_TEXT)},
        tag="Perturbed",
    )
    direct = judge_zero_shot(
        perturbed, station.criterion("c01"), EvalConfig(model_id="mock-model"), gateway
    )
    assert direct.decision is False  # full composite text is absent
    with_cd = judge(
        perturbed, station.criterion("c01"), config, gateway, decompose_cache=cache
    )
    assert with_cd.decision is True  # OR: the surviving disjunct passes
    assert with_cd.cd_fallback is False
    assert "[A:" in with_cd.justification and "[B:" in with_cd.justification
    assert cache.get(COMPOSITE_TEXT) is not None


def test_cd_falls_back_to_atomic_on_invalid_decomposition(make_gateway):
    station = composite_station()
    gw_generate = make_gateway()
    transcript = build_transcript(station, gw_generate)
    bad = json.dumps(
        {"composite": True, "sub_criteria": {"A": "x"}, "expression": "AND(A)"}
    )
    gw = make_gateway(script=[("TASK: DECOMPOSE_CRITERION", bad)])
    config = EvalConfig(model_id="mock-model", tools=frozenset({"CD"}))
    judgment = judge(transcript, station.criterion("c01"), config, gw)
    assert judgment.cd_fallback is True
    assert judgment.decision is True  # atomic fallback judges the full text


def test_md_injects_definitions_into_the_task_description(
    make_gateway, fixtures_dir
):
    lexicon = build_lexicon(fixtures_dir / "lexicon.json")
    station = Station(
        id="701",
        doctor_sheet={"situation": "x"},
        patient_sheet={"contexte": "y"},
        criteria=[
            Criterion(id="c01", text="Recherche un trouble obsessionnel compulsif"),
            Criterion(id="c02", text="Explique le plan de suivi au patient"),
        ],
    )
    gw = make_gateway()
    transcript = build_transcript(station, gw)
    seen = []
    original = gw.complete

    def spy(request):
        seen.append(request.messages[-1].content)
        return original(request)

    gw.complete = spy
    config = EvalConfig(model_id="mock-model", tools=frozenset({"MD"}))
    with pytest.raises(UsageError):
        judge(transcript, station.criterion("c01"), config, gw)
    judged = judge(transcript, station.criterion("c01"), config, gw, lexicon=lexicon)
    assert judged.decision is True
    assert any("Définitions médicales" in p for p in seen)
    assert any("An anxiety disorder" in p for p in seen)
    # a criterion without matched terms judges identically to direct
    seen.clear()
    with_md = judge(transcript, station.criterion("c02"), config, gw, lexicon=lexicon)
    assert not any("Définitions médicales" in p for p in seen)
    direct = judge(
        transcript, station.criterion("c02"),
        EvalConfig(model_id="mock-model"), gw,
    )
    assert {**with_md.to_dict(), "tools": []} == direct.to_dict()


# --- benchmark runs -------------------------------------------------------------------


def test_run_benchmark_writes_reports(gateway, tmp_path):
    station = composite_station()
    unperturbed = build_transcript(station, gateway)
    perturbed = build_transcript(
        station, gateway,
        perturbed={"c02": perturb_text(station.criterion("c02").text)},
        tag="Perturbed",
    )
    reference = {
        unperturbed.id: {"c01": True, "c02": True, "c03": True},
        perturbed.id: {"c01": True, "c02": False, "c03": True},
    }
    config = EvalConfig(model_id="mock-model", run_id="essai")
    reports = run_benchmark(
        {station.id: station},
        [unperturbed, perturbed],
        reference,
        [config],
        gateway,
        out_dir=tmp_path,
    )
    assert len(reports) == 1
    report = reports[0]
    assert report.overall.n == 6
    assert report.overall.accuracy == 1.0
    assert report.per_station[station.id].n == 6
    summary = json.loads((tmp_path / "essai" / "summary.json").read_text())
    assert summary["accuracy"] == "100.00"
    assert summary["strategy"] == "zero-shot"
    assert summary["tools"] == "direct"
    lines = (tmp_path / "essai" / "judgments.jsonl").read_text().splitlines()
    assert len(lines) == 6
    assert all(json.loads(line)["model_id"] == "mock-model" for line in lines)


def test_run_benchmark_requires_complete_reference(gateway):
    station = composite_station()
    transcript = build_transcript(station, gateway)
    config = EvalConfig(model_id="mock-model")
    with pytest.raises(MissingReference):
        run_benchmark(
            {station.id: station},
            [transcript],
            {transcript.id: {"c01": True}},
            [config],
            gateway,
        )
