"""Command-line pipeline: generate, label, evaluate, report, validate."""

import json

import pytest
from click.testing import CliRunner

from oscebench.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def run_cli(runner, out, args):
    return runner.invoke(
        main, ["--backend", "mock", "--seed", "0", "--out", str(out), *args]
    )


@pytest.fixture
def pipeline_out(tmp_path, runner, fixtures_dir):
    """Corpus generated and strict-labeled from two fixture stations."""
    out = tmp_path / "corpus"
    for station_id in ("113", "128"):
        result = run_cli(
            runner,
            out,
            [
                "generate",
                "--station",
                str(fixtures_dir / "stations" / station_id / "station.json"),
            ],
        )
        assert result.exit_code == 0, result.output
    result = run_cli(runner, out, ["label", "--corpus", str(out), "--mode", "strict"])
    assert result.exit_code == 0, result.output
    return out


def test_generate_writes_corpus_and_manifest(pipeline_out):
    out = pipeline_out
    assert (out / "113" / "station.json").exists()
    for tag in ("unperturbed", "perturbed"):
        assert (out / "113" / "transcripts" / f"113-{tag}.json").exists()
        assert (out / "113" / "labels" / f"113-{tag}.strict.json").exists()
    assert (out / "manifest.json").exists()
    assert list((out / "113" / "plans").glob("*.json"))
    manifests = list((out / "runs").glob("generate-*.json"))
    manifests = [p for p in manifests if not p.name.endswith(".timing.json")]
    assert manifests
    payload = json.loads(manifests[0].read_text())
    assert payload["command"] == "generate"
    assert "wall" not in json.dumps(payload)  # timings live in the sidecar
    assert list((out / "runs").glob("generate-*.timing.json"))


def test_generate_requires_station_arguments(runner, tmp_path):
    result = run_cli(runner, tmp_path / "c", ["generate"])
    assert result.exit_code == 2


def test_label_consistency_runs_record_kappa(pipeline_out, runner):
    out = pipeline_out
    result = run_cli(
        runner,
        out,
        ["label", "--corpus", str(out), "--mode", "soft", "--consistency-runs", "2"],
    )
    assert result.exit_code == 0, result.output
    manifests = sorted((out / "runs").glob("label-*.json"))
    manifests = [p for p in manifests if not p.name.endswith(".timing.json")]
    payloads = [json.loads(p.read_text()) for p in manifests]
    soft = [p for p in payloads if p["mode"] == "Soft"]
    assert soft and all(k == 1.0 for k in soft[0]["kappa"].values())


def test_evaluate_and_report(pipeline_out, runner, fixtures_dir):
    out = pipeline_out
    result = run_cli(
        runner,
        out,
        [
            "evaluate",
            "--run", str(fixtures_dir / "runs" / "zs.json"),
            "--corpus", str(out),
            "--reference-mode", "strict",
            "--lexicon", str(fixtures_dir / "lexicon.json"),
        ],
    )
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "reports" / "zs-direct" / "summary.json").read_text())
    # the judge and the silver labeler share the deterministic mock backend
    assert summary["accuracy"] == "100.00"
    assert summary["n"] == (17 + 18) * 2

    result = run_cli(runner, out, ["report", "--corpus", str(out), "--mode", "strict"])
    assert result.exit_code == 0, result.output
    table = (out / "reports" / "table1_failed_ratio.csv").read_text()
    assert table.startswith("station_id,criteria,")
    assert "Total,35," in table
    matrix = (out / "reports" / "table2_matrix_all.csv").read_text()
    assert "zero-shot,100.00" in matrix


def test_validate_accepts_then_rejects_tampering(pipeline_out, runner):
    out = pipeline_out
    result = run_cli(runner, out, ["validate", "--corpus", str(out)])
    assert result.exit_code == 0, result.output
    assert "corpus ok" in result.output
    target = out / "113" / "transcripts" / "113-unperturbed.json"
    target.write_text(target.read_text() + " ", encoding="utf-8")
    result = run_cli(runner, out, ["validate", "--corpus", str(out)])
    assert result.exit_code == 1
    assert "hash mismatch" in result.output


def test_domain_errors_exit_1(runner, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = run_cli(runner, tmp_path / "out", ["label", "--corpus", str(empty)])
    assert result.exit_code == 1
    assert "error:" in result.output


def test_unknown_backend_exits_2(runner, tmp_path):
    result = runner.invoke(main, ["--backend", "telepathy", "validate"])
    assert result.exit_code == 2
