"""HTTP API for human review of silver labels.

Overrides are append-only events (one JSON object per line in
``labels/{transcript_id}.review.log``), never in-place edits: the audit
trail is the source of truth and the reviewed label set is always the
replay of that log over the silver set.  A 2xx response is sent only after
the event is durably on disk.
"""

from __future__ import annotations

import json
import os
import threading
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .corpus import (
    Corpus,
    labelset_to_dict,
    load_corpus,
    review_event_from_dict,
    review_event_to_dict,
    transcript_to_dict,
)
from .labeling import apply_review
from .models import LabelSet, ReviewEvent

MODES = {"soft": "Soft", "strict": "Strict"}


class OverrideRequest(BaseModel):
    decision: bool
    reviewer: str
    note: str = ""


def review_log_path(corpus: Corpus, transcript_id: str) -> Path:
    station_id = corpus.transcripts[transcript_id].station_id
    return corpus.root / station_id / "labels" / f"{transcript_id}.review.log"


def read_review_log(path: Path) -> list[ReviewEvent]:
    if not path.exists():
        return []
    events = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            events.append(review_event_from_dict(json.loads(line)))
    return events


def append_review_event(path: Path, event: ReviewEvent) -> None:
    """Durable append: the write is flushed and fsynced before returning."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(review_event_to_dict(event), ensure_ascii=False) + "\n")
        handle.flush()
        os.fsync(handle.fileno())


def reviewed_labelset(corpus: Corpus, transcript_id: str, mode: str) -> LabelSet:
    """Silver labels with the full review log applied."""
    silver = corpus.labels.get((transcript_id, mode))
    if silver is None:
        raise KeyError(f"no {mode} labels for transcript {transcript_id!r}")
    events = read_review_log(review_log_path(corpus, transcript_id))
    return apply_review(silver, events)


def create_app(
    corpus_root: Path | str,
    review_token: str = "",
    ui_dir: Path | str | None = None,
) -> FastAPI:
    corpus = load_corpus(corpus_root)
    app = FastAPI(title="OSCE label review")
    app.state.corpus = corpus
    app.state.review_token = review_token
    write_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def lock_for(transcript_id: str) -> threading.Lock:
        with locks_guard:
            return write_locks.setdefault(transcript_id, threading.Lock())

    def normalize_mode(mode: str) -> str:
        if mode.lower() not in MODES:
            raise HTTPException(status_code=400, detail=f"unknown mode {mode!r}")
        return MODES[mode.lower()]

    @app.get("/api/stations")
    def list_stations():
        return [
            {"id": s.id, "criterion_count": len(s.criteria)}
            for s in sorted(corpus.stations.values(), key=lambda s: s.id)
        ]

    @app.get("/api/stations/{station_id}")
    def get_station(station_id: str):
        station = corpus.stations.get(station_id)
        if station is None:
            raise HTTPException(status_code=404, detail="station not found")
        from .corpus import station_to_dict

        data = station_to_dict(station)
        data["transcript_ids"] = sorted(
            t.id for t in corpus.transcripts.values() if t.station_id == station_id
        )
        return data

    @app.get("/api/transcripts/{transcript_id}")
    def get_transcript(transcript_id: str):
        transcript = corpus.transcripts.get(transcript_id)
        if transcript is None:
            raise HTTPException(status_code=404, detail="transcript not found")
        return transcript_to_dict(transcript)

    @app.get("/api/labels/{transcript_id}")
    def get_labels(transcript_id: str, mode: str = Query("strict")):
        mode = normalize_mode(mode)
        try:
            labels = reviewed_labelset(corpus, transcript_id, mode)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return labelset_to_dict(labels)

    @app.post("/api/labels/{transcript_id}/{criterion_id}/override")
    def post_override(
        transcript_id: str,
        criterion_id: str,
        body: OverrideRequest,
        mode: str = Query("strict"),
        x_review_token: str = Header(default=""),
    ):
        if app.state.review_token and x_review_token != app.state.review_token:
            raise HTTPException(status_code=403, detail="invalid review token")
        mode = normalize_mode(mode)
        with lock_for(transcript_id):
            try:
                current = reviewed_labelset(corpus, transcript_id, mode)
            except KeyError as exc:
                raise HTTPException(status_code=404, detail=str(exc))
            if criterion_id not in current.entries:
                raise HTTPException(status_code=404, detail="criterion not found")
            event = ReviewEvent(
                criterion_id=criterion_id,
                new_decision=body.decision,
                reviewer=body.reviewer,
                note=body.note,
                timestamp=datetime.now(timezone.utc).isoformat(),
                prior_decision=current.entries[criterion_id].decision,
            )
            append_review_event(review_log_path(corpus, transcript_id), event)
        return {"status": "ok", "event": review_event_to_dict(event)}

    @app.get("/api/export/{transcript_id}")
    def export_reviewed(transcript_id: str, mode: str = Query("strict")):
        mode = normalize_mode(mode)
        try:
            labels = reviewed_labelset(corpus, transcript_id, mode)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return labelset_to_dict(labels)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(
    corpus_root: Path | str,
    host: str = "127.0.0.1",
    port: int = 8000,
    review_token: str = "",
    ui_dir: Path | str | None = None,
) -> None:
    import uvicorn

    app = create_app(corpus_root, review_token=review_token, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)
