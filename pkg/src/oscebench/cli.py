"""Operator entry point: generate, label, review, evaluate, report, validate.

Every subcommand with ``--backend mock`` is fully offline and
deterministic.  Each invocation emits one run manifest under
``{out}/runs/`` (configuration, seeds, template version, output hashes);
wall-clock timings go to a ``.timing.json`` sidecar so the manifest itself
is byte-stable.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path

import click

from . import corpus as corpus_io
from .errors import OsceBenchError
from .expr import DecompositionCache
from .gateway import Gateway, GatewayConfig, MockBackend
from .generation import (
    GenerationConfig,
    PerturbationPlan,
    generate_transcript,
    identify_leaves,
    plan_perturbation,
    polish_boundaries,
    reorder_criteria,
)
from .judging import load_eval_config, run_benchmark
from .labeling import self_consistency, silver_label
from .meddefs import build_lexicon
from .metrics import ResultMatrix, failed_ratio, render_reports
from .prompts import TEMPLATE_VERSION
from .review_service import read_review_log, review_log_path, reviewed_labelset
from .seeds import derive_seed


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def build_gateway(ctx_obj: dict) -> Gateway:
    backend_kind = ctx_obj["backend"]
    config = GatewayConfig(
        model_id=ctx_obj.get("model_id", "mock-model"),
        backend=backend_kind,
        endpoint=ctx_obj.get("endpoint"),
        cache_dir=ctx_obj.get("cache_dir"),
    )
    backend = None
    if backend_kind == "mock" and ctx_obj.get("mock_script"):
        backend = MockBackend.from_script_file(ctx_obj["mock_script"])
    return Gateway(config, backend=backend)


def write_run_manifest(out: Path, command: str, payload: dict, started: float) -> Path:
    runs = out / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "template_version": TEMPLATE_VERSION,
        **payload,
    }
    body = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()[:12]
    path = runs / f"{command}-{digest}.json"
    path.write_text(body, encoding="utf-8")
    timing = {"wall_clock_seconds": round(time.monotonic() - started, 3)}
    (runs / f"{command}-{digest}.timing.json").write_text(
        json.dumps(timing) + "\n", encoding="utf-8"
    )
    return path


def hash_paths(root: Path, paths: list[Path]) -> dict[str, str]:
    return {
        p.relative_to(root).as_posix(): corpus_io.file_sha256(p)
        for p in sorted(paths)
    }


@click.group()
@click.option("--backend", type=click.Choice(["http", "mock"]), default="mock")
@click.option("--seed", type=int, default=0, help="root seed for all named streams")
@click.option("--out", type=click.Path(), default="corpus", help="corpus root directory")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--mock-script", type=click.Path(exists=True), default=None)
@click.option("--endpoint", default=None, help="HTTP backend endpoint URL")
@click.option("--model-id", default="mock-model")
@click.pass_context
def main(ctx, backend, seed, out, config_path, mock_script, endpoint, model_id):
    """Synthetic OSCE transcript generation, labeling and judge benchmarking."""
    file_config = _load_config_file(config_path)
    # precedence: CLI > config file defaults
    ctx.obj = {
        "backend": backend or file_config.get("backend", "mock"),
        "seed": seed if seed is not None else file_config.get("seed", 0),
        "out": Path(out or file_config.get("out", "corpus")),
        "mock_script": mock_script or file_config.get("mock_script"),
        "endpoint": endpoint or file_config.get("endpoint"),
        "model_id": model_id or file_config.get("model_id", "mock-model"),
    }


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@main.command()
@click.option("--station", "station_paths", type=click.Path(exists=True), multiple=True)
@click.option("--stations", "stations_dir", type=click.Path(exists=True), default=None)
@click.option("--perturb", type=float, default=0.5, help="perturbation rate for the perturbed corpus")
@click.option("--slice-size", type=int, default=4)
@click.pass_context
def generate(ctx, station_paths, stations_dir, perturb, slice_size):
    """Reorder, perturb, generate and polish transcripts per station."""
    started = time.monotonic()
    out: Path = ctx.obj["out"]
    root_seed: int = ctx.obj["seed"]
    paths = [Path(p) for p in station_paths]
    if stations_dir:
        paths.extend(sorted(Path(stations_dir).glob("*/station.json")))
    if not paths:
        raise click.UsageError("provide --station or --stations")
    try:
        gateway = build_gateway(ctx.obj)
        written: list[Path] = []
        for path in paths:
            station = corpus_io.load_station(path)
            written.append(corpus_io.write_station(out, station))
            for tag, rate in (("unperturbed", 0.0), ("perturbed", perturb)):
                config = GenerationConfig(
                    slice_size=slice_size,
                    perturbation_rate=rate,
                    seed=derive_seed(root_seed, "station", station.id, tag),
                    model_id=ctx.obj["model_id"],
                )
                ordering = reorder_criteria(station, gateway, config)
                if rate > 0:
                    leaves = identify_leaves(station, gateway, config)
                    plan = plan_perturbation(station, leaves, config, gateway)
                else:
                    plan = PerturbationPlan(
                        rate=0.0, seed=config.seed, selected=[], perturbed_text={}
                    )
                plan_path = out / station.id / "plans" / f"{plan.plan_id()}.json"
                plan.save(plan_path)
                written.append(plan_path)
                transcript = generate_transcript(
                    station,
                    ordering,
                    plan,
                    config,
                    gateway,
                    transcript_id=f"{station.id}-{tag}",
                    corpus_tag=tag.capitalize(),
                )
                transcript = polish_boundaries(transcript, gateway, config)
                written.append(corpus_io.write_transcript(out, transcript))
        corpus_io.rebuild_manifest(out)
        write_run_manifest(
            out,
            "generate",
            {
                "seed": root_seed,
                "perturbation_rate": perturb,
                "slice_size": slice_size,
                "stations": sorted(p.as_posix() for p in paths),
                "outputs": hash_paths(out, written),
            },
            started,
        )
    except OsceBenchError as exc:
        _fail(exc)
    click.echo(f"generated {len(paths)} station(s) into {out}")


@main.command()
@click.option("--corpus", "corpus_root", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["soft", "strict"]), default="strict")
@click.option("--consistency-runs", type=int, default=0)
@click.pass_context
def label(ctx, corpus_root, mode, consistency_runs):
    """Silver-label every transcript in the corpus."""
    started = time.monotonic()
    out: Path = ctx.obj["out"]
    root_seed: int = ctx.obj["seed"]
    mode_name = mode.capitalize()
    try:
        gateway = build_gateway(ctx.obj)
        corpus = corpus_io.load_corpus(corpus_root)
        written: list[Path] = []
        kappas: dict[str, float] = {}
        for tid in sorted(corpus.transcripts):
            transcript = corpus.transcripts[tid]
            station = corpus.stations[transcript.station_id]
            seed = derive_seed(root_seed, "label", mode_name, tid)
            labels = silver_label(transcript, station, mode_name, gateway, seed=seed)
            written.append(corpus_io.write_labelset(corpus.root, station.id, labels))
            if consistency_runs >= 2:
                report = self_consistency(
                    transcript, station, mode_name, consistency_runs, gateway, seed=seed
                )
                kappas[tid] = round(report.kappa, 6)
        corpus_io.rebuild_manifest(corpus.root)
        write_run_manifest(
            out,
            "label",
            {
                "seed": root_seed,
                "mode": mode_name,
                "consistency_runs": consistency_runs,
                "kappa": kappas,
                "outputs": hash_paths(corpus.root, written),
            },
            started,
        )
    except OsceBenchError as exc:
        _fail(exc)
    click.echo(f"labeled {len(corpus.transcripts)} transcript(s) in {mode_name} mode")


@main.command()
@click.option("--corpus", "corpus_root", type=click.Path(exists=True), required=True)
@click.option("--bind", default="127.0.0.1:8000")
@click.option("--token", default="", help="shared X-Review-Token value")
@click.option("--ui-dir", type=click.Path(), default=None)
@click.pass_context
def review(ctx, corpus_root, bind, token, ui_dir):
    """Serve the label review API (and UI bundle when available)."""
    from .review_service import serve

    host, _, port = bind.partition(":")
    try:
        serve(
            corpus_root,
            host=host or "127.0.0.1",
            port=int(port or 8000),
            review_token=token,
            ui_dir=ui_dir,
        )
    except OsceBenchError as exc:
        _fail(exc)


@main.command()
@click.option("--run", "run_config", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_root", type=click.Path(exists=True), required=True)
@click.option("--reference-mode", type=click.Choice(["soft", "strict"]), default="strict")
@click.option("--lexicon", "lexicon_path", type=click.Path(exists=True), default=None)
@click.pass_context
def evaluate(ctx, run_config, corpus_root, reference_mode, lexicon_path):
    """Run a judge benchmark from a run config file."""
    started = time.monotonic()
    out: Path = ctx.obj["out"]
    mode_name = reference_mode.capitalize()
    try:
        gateway = build_gateway(ctx.obj)
        corpus = corpus_io.load_corpus(corpus_root)
        config, corpus_filter = load_eval_config(run_config)
        transcripts = [
            t
            for t in corpus.transcripts.values()
            if corpus_filter in ("All", t.corpus_tag)
        ]
        reference = {}
        for t in transcripts:
            labels = reviewed_labelset(corpus, t.id, mode_name)
            reference[t.id] = labels.decisions()
        lexicon = build_lexicon(lexicon_path) if lexicon_path else None
        cache = DecompositionCache(out / "cache" / "decompositions.json")
        reports = run_benchmark(
            corpus.stations,
            transcripts,
            reference,
            [config],
            gateway,
            lexicon=lexicon,
            decompose_cache=cache,
            out_dir=out / "reports",
        )
        write_run_manifest(
            out,
            "evaluate",
            {
                "seed": ctx.obj["seed"],
                "run_config": Path(run_config).name,
                "reference_mode": mode_name,
                "corpus_filter": corpus_filter,
                "results": {r.run_id: r.overall.rendered() for r in reports},
            },
            started,
        )
        for report in reports:
            click.echo(f"{report.run_id}: accuracy {report.overall.rendered()}")
    except OsceBenchError as exc:
        _fail(exc)


@main.command()
@click.option("--corpus", "corpus_root", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["soft", "strict"]), default="strict")
@click.pass_context
def report(ctx, corpus_root, mode):
    """Render the failed-ratio table and accuracy matrices."""
    started = time.monotonic()
    out: Path = ctx.obj["out"]
    mode_name = mode.capitalize()
    try:
        corpus = corpus_io.load_corpus(corpus_root)
        stations = {sid: len(s.criteria) for sid, s in corpus.stations.items()}
        by_tag: dict[str, dict[str, dict[str, bool]]] = {
            "Unperturbed": {},
            "Perturbed": {},
        }
        for t in corpus.transcripts.values():
            if t.corpus_tag not in by_tag:
                continue
            labels = reviewed_labelset(corpus, t.id, mode_name)
            by_tag[t.corpus_tag][t.station_id] = labels.decisions()
        table = failed_ratio(stations, by_tag["Unperturbed"], by_tag["Perturbed"])
        matrices: dict[str, ResultMatrix] = {}
        for summary_path in sorted((out / "reports").glob("*/summary.json")):
            summary = json.loads(summary_path.read_text(encoding="utf-8"))
            corpus_key = summary["corpus"].lower()
            matrix = matrices.setdefault(corpus_key, ResultMatrix(corpus=corpus_key))
            matrix.set(
                summary["model_id"],
                summary["strategy"],
                summary["tools"],
                summary["accuracy"],
            )
        written = render_reports(
            out / "reports",
            failed_table=table,
            matrices=list(matrices.values()),
        )
        write_run_manifest(
            out,
            "report",
            {
                "mode": mode_name,
                "outputs": hash_paths(out, written),
            },
            started,
        )
    except OsceBenchError as exc:
        _fail(exc)
    click.echo(f"reports written under {out / 'reports'}")


@main.command()
@click.option("--corpus", "corpus_root", type=click.Path(exists=True), required=True)
@click.pass_context
def validate(ctx, corpus_root):
    """Lint the corpus: manifest hashes, invariants, cross-references."""
    try:
        corpus = corpus_io.load_corpus(corpus_root)
        problems = corpus_io.verify_manifest(corpus_root)
        from .models import validate_labelset

        for (tid, _mode), labels in corpus.labels.items():
            transcript = corpus.transcripts[tid]
            station = corpus.stations[transcript.station_id]
            try:
                validate_labelset(labels, station, transcript)
            except OsceBenchError as exc:
                problems.append(str(exc))
        for tid in sorted(corpus.transcripts):
            log_path = review_log_path(corpus, tid)
            for event in read_review_log(log_path):
                station = corpus.station_for_transcript(tid)
                if event.criterion_id not in station.criterion_ids():
                    problems.append(
                        f"review log {log_path.name}: unknown criterion "
                        f"{event.criterion_id}"
                    )
    except OsceBenchError as exc:
        _fail(exc)
    if problems:
        for problem in problems:
            click.echo(f"problem: {problem}", err=True)
        sys.exit(1)
    click.echo(
        f"corpus ok: {len(corpus.stations)} stations, "
        f"{len(corpus.transcripts)} transcripts, {len(corpus.labels)} label sets"
    )


if __name__ == "__main__":
    main()
