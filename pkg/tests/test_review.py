"""Review HTTP service: read endpoints, override event log, durability."""

import json

import pytest
from fastapi.testclient import TestClient

from oscebench import corpus as corpus_io
from oscebench.generation import (
    GenerationConfig,
    PerturbationPlan,
    generate_transcript,
    reorder_criteria,
)
from oscebench.labeling import apply_review, silver_label
from oscebench.review_service import (
    append_review_event,
    create_app,
    read_review_log,
    review_log_path,
    reviewed_labelset,
)


@pytest.fixture
def corpus_root(tmp_path, make_station, gateway):
    station = make_station(n=4, station_id="910")
    config = GenerationConfig(slice_size=4, seed=1)
    ordering = reorder_criteria(station, gateway, config)
    plan = PerturbationPlan(rate=0.0, seed=1, selected=[], perturbed_text={})
    transcript = generate_transcript(
        station, ordering, plan, config, gateway,
        transcript_id="910-unperturbed", corpus_tag="Unperturbed",
    )
    labels = silver_label(transcript, station, "Strict", gateway)
    corpus_io.save_corpus(tmp_path, [station], [transcript], [labels])
    return tmp_path


@pytest.fixture
def client(corpus_root):
    return TestClient(create_app(corpus_root, review_token="jeton"))


AUTH = {"X-Review-Token": "jeton"}


def _override(client, cid, decision, tid="910-unperturbed", headers=AUTH, **body):
    payload = {"decision": decision, "reviewer": "dr.martin", "note": "", **body}
    return client.post(
        f"/api/labels/{tid}/{cid}/override?mode=strict", json=payload, headers=headers
    )


# --- read endpoints ---------------------------------------------------------------


def test_list_and_get_station(client):
    listed = client.get("/api/stations").json()
    assert listed == [{"id": "910", "criterion_count": 4}]
    detail = client.get("/api/stations/910").json()
    assert detail["transcript_ids"] == ["910-unperturbed"]
    assert len(detail["criteria"]) == 4
    assert client.get("/api/stations/999").status_code == 404


def test_get_transcript_and_labels(client):
    transcript = client.get("/api/transcripts/910-unperturbed").json()
    assert transcript["station_id"] == "910"
    assert transcript["turns"][0]["index"] == 0
    assert client.get("/api/transcripts/nope").status_code == 404
    labels = client.get("/api/labels/910-unperturbed?mode=strict").json()
    assert set(labels["entries"]) == {"c01", "c02", "c03", "c04"}
    assert client.get("/api/labels/910-unperturbed?mode=soft").status_code == 404
    assert client.get("/api/labels/910-unperturbed?mode=bizarre").status_code == 400


# --- overrides -----------------------------------------------------------------------


def test_override_requires_token(client):
    assert _override(client, "c01", False, headers={}).status_code == 403
    assert (
        _override(client, "c01", False, headers={"X-Review-Token": "faux"}).status_code
        == 403
    )


def test_override_unknown_targets(client):
    assert _override(client, "c99", False).status_code == 404
    assert _override(client, "c01", False, tid="nope").status_code == 404


def test_override_appends_event_and_updates_labels(client, corpus_root):
    response = _override(client, "c01", False, note="non réalisé")
    assert response.status_code == 200
    event = response.json()["event"]
    assert event["prior_decision"] is True
    log_path = corpus_root / "910" / "labels" / "910-unperturbed.review.log"
    lines = log_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0]) == event
    labels = client.get("/api/labels/910-unperturbed?mode=strict").json()
    assert labels["entries"]["c01"]["decision"] is False
    assert labels["entries"]["c01"]["source"] == "Reviewed"
    # prior_decision of a second override reflects the reviewed state
    second = _override(client, "c01", True).json()["event"]
    assert second["prior_decision"] is False


def test_export_matches_replay_of_the_log(client, corpus_root):
    _override(client, "c02", False)
    _override(client, "c03", False)
    _override(client, "c02", True)
    export = client.get("/api/export/910-unperturbed?mode=strict").json()
    corpus = corpus_io.load_corpus(corpus_root)
    silver = corpus.labels[("910-unperturbed", "Strict")]
    log = read_review_log(review_log_path(corpus, "910-unperturbed"))
    replayed = corpus_io.labelset_to_dict(apply_review(silver, log))
    assert export == replayed
    assert len(log) == 3


def test_acknowledged_events_survive_an_app_restart(client, corpus_root):
    assert _override(client, "c04", False).status_code == 200
    # a brand-new app instance reloads everything from disk
    fresh = TestClient(create_app(corpus_root, review_token="jeton"))
    labels = fresh.get("/api/labels/910-unperturbed?mode=strict").json()
    assert labels["entries"]["c04"]["decision"] is False
    assert len(labels["review_log"]) == 1


def test_read_endpoints_do_not_mutate_the_corpus(client, corpus_root):
    before = {
        p.relative_to(corpus_root).as_posix(): corpus_io.file_sha256(p)
        for p in sorted(corpus_root.rglob("*"))
        if p.is_file()
    }
    client.get("/api/stations")
    client.get("/api/stations/910")
    client.get("/api/transcripts/910-unperturbed")
    client.get("/api/labels/910-unperturbed?mode=strict")
    client.get("/api/export/910-unperturbed?mode=strict")
    after = {
        p.relative_to(corpus_root).as_posix(): corpus_io.file_sha256(p)
        for p in sorted(corpus_root.rglob("*"))
        if p.is_file()
    }
    assert after == before


def test_reviewed_labelset_helper(corpus_root):
    corpus = corpus_io.load_corpus(corpus_root)
    path = review_log_path(corpus, "910-unperturbed")
    assert read_review_log(path) == []
    silver = reviewed_labelset(corpus, "910-unperturbed", "Strict")
    assert silver.decisions()["c01"] is True
    event = read_review_log(path)  # still empty, nothing appended yet
    assert event == []
    from oscebench.models import ReviewEvent

    append_review_event(
        path,
        ReviewEvent("c01", False, "dr", "", "2026-01-01T00:00:00+00:00", True),
    )
    reviewed = reviewed_labelset(corpus, "910-unperturbed", "Strict")
    assert reviewed.decisions()["c01"] is False
    with pytest.raises(KeyError):
        reviewed_labelset(corpus, "910-unperturbed", "Soft")
