"""Corpus file I/O: station files, transcripts, labels, manifest.

On-disk layout, one directory per station under the corpus root::

    {root}/{station_id}/station.json
    {root}/{station_id}/transcripts/{transcript_id}.json
    {root}/{station_id}/labels/{transcript_id}.{mode}.json
    {root}/{station_id}/labels/{transcript_id}.review.log
    {root}/manifest.json

All JSON is UTF-8, sorted keys, 2-space indent, so files are diffable and
serialization round-trips byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConsistencyError, IoError, ParseError, ValidationError
from .models import (
    Criterion,
    GenerationProvenance,
    LabelEntry,
    LabelSet,
    ReviewEvent,
    Station,
    Transcript,
    Turn,
)


def _dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _load_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc


# --- station ------------------------------------------------------------------

def station_to_dict(station: Station) -> dict:
    return {
        "id": station.id,
        "doctor_sheet": station.doctor_sheet,
        "patient_sheet": station.patient_sheet,
        "criteria": [
            {
                "id": c.id,
                "text": c.text,
                "dependencies": sorted(c.dependencies),
                **({"oiap_phase": c.oiap_phase} if c.oiap_phase else {}),
                **({"composite": c.composite} if c.composite else {}),
            }
            for c in station.criteria
        ],
        "ordering_strategy": station.ordering_strategy,
    }


def station_from_dict(data: dict) -> Station:
    try:
        criteria = [
            Criterion(
                id=str(c["id"]),
                text=str(c["text"]),
                dependencies=frozenset(str(d) for d in c.get("dependencies", [])),
                oiap_phase=c.get("oiap_phase"),
                composite=c.get("composite"),
            )
            for c in data["criteria"]
        ]
        return Station(
            id=str(data["id"]),
            doctor_sheet=dict(data["doctor_sheet"]),
            patient_sheet=dict(data["patient_sheet"]),
            criteria=criteria,
            ordering_strategy=data.get("ordering_strategy", "OIAP"),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"station file missing field: {exc}") from exc


def load_station(path: Path | str) -> Station:
    """Load and fully validate a station file (or station directory)."""
    path = Path(path)
    if path.is_dir():
        path = path / "station.json"
    return station_from_dict(_load_json(path))


# --- transcript ---------------------------------------------------------------

def transcript_to_dict(transcript: Transcript) -> dict:
    data = {
        "id": transcript.id,
        "station_id": transcript.station_id,
        "corpus_tag": transcript.corpus_tag,
        "turns": [
            {"index": t.index, "role": t.role, "text": t.text}
            for t in transcript.turns
        ],
    }
    if transcript.provenance is not None:
        p = transcript.provenance
        data["provenance"] = {
            "slice_size": p.slice_size,
            "seed": p.seed,
            "plan_id": p.plan_id,
            "slices": p.slices,
        }
    return data


def transcript_from_dict(data: dict) -> Transcript:
    provenance = None
    if "provenance" in data and data["provenance"] is not None:
        p = data["provenance"]
        provenance = GenerationProvenance(
            slice_size=int(p["slice_size"]),
            seed=int(p["seed"]),
            plan_id=p.get("plan_id"),
            slices=[list(map(str, s)) for s in p["slices"]],
        )
    return Transcript(
        id=str(data["id"]),
        station_id=str(data["station_id"]),
        turns=[
            Turn(index=int(t["index"]), role=str(t["role"]), text=str(t["text"]))
            for t in data["turns"]
        ],
        provenance=provenance,
        corpus_tag=data.get("corpus_tag", "Unperturbed"),
    )


def load_transcript(path: Path | str) -> Transcript:
    return transcript_from_dict(_load_json(Path(path)))


# --- labels -------------------------------------------------------------------

def labelset_to_dict(labels: LabelSet) -> dict:
    return {
        "transcript_id": labels.transcript_id,
        "mode": labels.mode,
        "entries": {
            cid: {
                "decision": e.decision,
                "justification": e.justification,
                "evidence": [list(r) for r in e.evidence],
                "source": e.source,
                "flagged": e.flagged,
            }
            for cid, e in labels.entries.items()
        },
        "review_log": [review_event_to_dict(ev) for ev in labels.review_log],
    }


def review_event_to_dict(event: ReviewEvent) -> dict:
    return {
        "criterion_id": event.criterion_id,
        "new_decision": event.new_decision,
        "reviewer": event.reviewer,
        "note": event.note,
        "timestamp": event.timestamp,
        "prior_decision": event.prior_decision,
    }


def review_event_from_dict(data: dict) -> ReviewEvent:
    return ReviewEvent(
        criterion_id=str(data["criterion_id"]),
        new_decision=bool(data["new_decision"]),
        reviewer=str(data["reviewer"]),
        note=str(data["note"]),
        timestamp=str(data["timestamp"]),
        prior_decision=bool(data["prior_decision"]),
    )


def labelset_from_dict(data: dict) -> LabelSet:
    return LabelSet(
        transcript_id=str(data["transcript_id"]),
        mode=str(data["mode"]),
        entries={
            cid: LabelEntry(
                decision=bool(e["decision"]),
                justification=str(e["justification"]),
                evidence=[tuple(r) for r in e["evidence"]],
                source=e.get("source", "Silver"),
                flagged=bool(e.get("flagged", False)),
            )
            for cid, e in data["entries"].items()
        },
        review_log=[review_event_from_dict(ev) for ev in data.get("review_log", [])],
    )


def load_labelset(path: Path | str) -> LabelSet:
    return labelset_from_dict(_load_json(Path(path)))


# --- manifest / corpus --------------------------------------------------------

@dataclass
class ManifestEntry:
    path: str  # relative to corpus root, POSIX separators
    sha256: str
    kind: str  # station | transcript | labels | plan | other


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]

    def to_list(self) -> list[dict]:
        return [
            {"path": e.path, "sha256": e.sha256, "kind": e.kind}
            for e in sorted(self.entries, key=lambda e: e.path)
        ]


def file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_corpus(
    root: Path | str,
    stations: list[Station],
    transcripts: list[Transcript],
    labels: list[LabelSet],
) -> CorpusManifest:
    """Write the corpus tree and its manifest.

    Every LabelSet must reference a transcript in ``transcripts``; every
    transcript must reference a station in ``stations``.
    """
    root = Path(root)
    station_ids = {s.id for s in stations}
    transcript_station = {t.id: t.station_id for t in transcripts}
    for t in transcripts:
        if t.station_id not in station_ids:
            raise ConsistencyError(
                f"transcript {t.id!r} references unknown station {t.station_id!r}"
            )
    for ls in labels:
        if ls.transcript_id not in transcript_station:
            raise ConsistencyError(
                f"label set references unknown transcript {ls.transcript_id!r}"
            )

    entries: list[ManifestEntry] = []

    def write(relpath: str, content: str, kind: str) -> None:
        path = root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
        entries.append(ManifestEntry(path=relpath, sha256=file_sha256(path), kind=kind))

    for station in stations:
        write(f"{station.id}/station.json", _dumps(station_to_dict(station)), "station")
    for transcript in transcripts:
        write(
            f"{transcript.station_id}/transcripts/{transcript.id}.json",
            _dumps(transcript_to_dict(transcript)),
            "transcript",
        )
    for ls in labels:
        station_id = transcript_station[ls.transcript_id]
        write(
            f"{station_id}/labels/{ls.transcript_id}.{ls.mode.lower()}.json",
            _dumps(labelset_to_dict(ls)),
            "labels",
        )
    manifest = CorpusManifest(entries)
    (root / "manifest.json").write_text(_dumps(manifest.to_list()), encoding="utf-8")
    return manifest


def write_station(root: Path | str, station: Station) -> Path:
    path = Path(root) / station.id / "station.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dumps(station_to_dict(station)), encoding="utf-8")
    return path


def write_transcript(root: Path | str, transcript: Transcript) -> Path:
    path = (
        Path(root)
        / transcript.station_id
        / "transcripts"
        / f"{transcript.id}.json"
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dumps(transcript_to_dict(transcript)), encoding="utf-8")
    return path


def write_labelset(root: Path | str, station_id: str, labels: LabelSet) -> Path:
    path = (
        Path(root)
        / station_id
        / "labels"
        / f"{labels.transcript_id}.{labels.mode.lower()}.json"
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dumps(labelset_to_dict(labels)), encoding="utf-8")
    return path


_MANIFEST_KINDS = (
    ("*/station.json", "station"),
    ("*/transcripts/*.json", "transcript"),
    ("*/labels/*.json", "labels"),
    ("*/plans/*.json", "plan"),
)


def rebuild_manifest(root: Path | str) -> CorpusManifest:
    """Re-scan the corpus tree and rewrite manifest.json."""
    root = Path(root)
    entries = []
    for pattern, kind in _MANIFEST_KINDS:
        for path in sorted(root.glob(pattern)):
            entries.append(
                ManifestEntry(
                    path=path.relative_to(root).as_posix(),
                    sha256=file_sha256(path),
                    kind=kind,
                )
            )
    manifest = CorpusManifest(entries)
    (root / "manifest.json").write_text(_dumps(manifest.to_list()), encoding="utf-8")
    return manifest


def load_manifest(root: Path | str) -> CorpusManifest:
    data = _load_json(Path(root) / "manifest.json")
    return CorpusManifest(
        [ManifestEntry(path=e["path"], sha256=e["sha256"], kind=e["kind"]) for e in data]
    )


def verify_manifest(root: Path | str) -> list[str]:
    """Return a list of problems (empty when every hashed file is intact)."""
    root = Path(root)
    problems = []
    for entry in load_manifest(root).entries:
        path = root / entry.path
        if not path.exists():
            problems.append(f"missing file: {entry.path}")
        elif file_sha256(path) != entry.sha256:
            problems.append(f"hash mismatch: {entry.path}")
    return problems


@dataclass
class Corpus:
    """In-memory view of a corpus directory."""

    root: Path
    stations: dict[str, Station]
    transcripts: dict[str, Transcript]
    labels: dict[tuple[str, str], LabelSet]  # (transcript_id, mode)

    def station_for_transcript(self, transcript_id: str) -> Station:
        return self.stations[self.transcripts[transcript_id].station_id]


def load_corpus(root: Path | str) -> Corpus:
    """Load every station, transcript and label set under ``root``."""
    root = Path(root)
    stations: dict[str, Station] = {}
    transcripts: dict[str, Transcript] = {}
    labels: dict[tuple[str, str], LabelSet] = {}
    for station_file in sorted(root.glob("*/station.json")):
        station = load_station(station_file)
        stations[station.id] = station
        for tfile in sorted(station_file.parent.glob("transcripts/*.json")):
            transcript = load_transcript(tfile)
            transcripts[transcript.id] = transcript
        for lfile in sorted(station_file.parent.glob("labels/*.json")):
            ls = load_labelset(lfile)
            if ls.transcript_id not in transcripts:
                raise ConsistencyError(
                    f"label set {lfile} references unknown transcript "
                    f"{ls.transcript_id!r}"
                )
            labels[(ls.transcript_id, ls.mode)] = ls
    if not stations:
        raise ValidationError(f"no stations found under {root}")
    return Corpus(root=root, stations=stations, transcripts=transcripts, labels=labels)
