"""Deterministic response synthesizer for the mock backend.

Produces a plausible, schema-conforming response for every pipeline prompt,
as a pure function of the request content.  This is what makes every
subcommand fully offline and byte-reproducible under ``--backend mock``:
fixed prompts yield fixed responses, regardless of call order or threading.

The synthesizer dispatches on the ``TASK:`` marker each prompt template
starts with, and parses the structured blocks the templates emit
(criteria lines, CRITERION line, TRANSCRIPT block).
"""

from __future__ import annotations

import json
import math
import re

from .meddefs import fold
from .prompts import TRANSCRIPT_BEGIN, TRANSCRIPT_END

_CRITERIA_LINE_RE = re.compile(r"^- \[(?P<id>[^\]]+)\] (?P<text>.*)$", re.MULTILINE)
_CRITERION_RE = re.compile(r"^CRITERION: (?P<text>.*)$", re.MULTILINE)
_TURN_RE = re.compile(r"^#(?P<index>\d+) (?P<role>Doctor|Patient): (?P<text>.*)$")
_TASK_RE = re.compile(r"^TASK: (?P<task>[A-Z_]+)$", re.MULTILINE)

PERTURBED_SUFFIX = "— sans chercher à obtenir l'information précise"
DOCTOR_PREFIX = "Abordons le point suivant :"
GREETING_TEXT = "Bonjour, je suis l'étudiant en médecine qui va mener cet entretien. Installez-vous."
CLOSING_TEXT = "Merci pour ces échanges, je vous souhaite une bonne journée. Au revoir."


def _dump(data) -> str:
    return json.dumps(data, ensure_ascii=False)


def _criteria_lines(prompt: str) -> list[tuple[str, str]]:
    return [
        (m.group("id"), m.group("text")) for m in _CRITERIA_LINE_RE.finditer(prompt)
    ]


def _criterion_text(prompt: str) -> str:
    m = _CRITERION_RE.search(prompt)
    return m.group("text") if m else ""


def _transcript_turns(prompt: str) -> list[tuple[int, str, str]]:
    begin = prompt.find(TRANSCRIPT_BEGIN)
    end = prompt.find(TRANSCRIPT_END)
    if begin == -1 or end == -1:
        return []
    body = prompt[begin + len(TRANSCRIPT_BEGIN) : end]
    turns = []
    for line in body.splitlines():
        m = _TURN_RE.match(line.strip())
        if m:
            turns.append((int(m.group("index")), m.group("role"), m.group("text")))
    return turns


def _merge_consecutive(indices: list[int]) -> list[list[int]]:
    ranges: list[list[int]] = []
    for i in sorted(set(indices)):
        if ranges and i == ranges[-1][1] + 1:
            ranges[-1][1] = i
        else:
            ranges.append([i, i])
    return ranges


# --- per-task synthesizers ------------------------------------------------------

def _synth_reorder(prompt: str) -> str:
    ids = [cid for cid, _ in _criteria_lines(prompt)]
    n = max(len(ids), 1)
    phases = {}
    for i, cid in enumerate(ids):
        frac = i / n
        if frac < 0.2:
            phases[cid] = "Opening"
        elif frac < 0.65:
            phases[cid] = "InformationCollection"
        elif frac < 0.85:
            phases[cid] = "Assessment"
        else:
            phases[cid] = "Plan"
    return _dump({"order": ids, "phases": phases})


def _synth_leaves(prompt: str) -> str:
    lines = _CRITERIA_LINE_RE.finditer(prompt)
    leaves = []
    for m in lines:
        if "(depends on:" not in m.group("text"):
            leaves.append(m.group("id"))
    return _dump({"leaves": leaves})


def _synth_perturb(prompt: str) -> str:
    text = _criterion_text(prompt)
    words = text.split()
    kept = words[: max(1, math.ceil(len(words) / 2))]
    perturbed = " ".join(kept) + " " + PERTURBED_SUFFIX
    return _dump({"perturbed_text": perturbed})


def _synth_segment(prompt: str) -> str:
    turns = []
    for _cid, text in _criteria_lines(prompt):
        turns.append({"role": "Doctor", "text": f"{DOCTOR_PREFIX} {text}"})
        turns.append({"role": "Patient", "text": "Oui docteur, je comprends, voilà ce que je peux vous dire à ce sujet."})
    return _dump({"turns": turns})


def _synth_polish(prompt: str) -> str:
    turns = [
        {"role": role, "text": text} for _, role, text in _transcript_turns(prompt)
    ]
    polished = [{"role": "Doctor", "text": GREETING_TEXT}]
    polished.extend(turns)
    polished.append({"role": "Doctor", "text": CLOSING_TEXT})
    return _dump({"turns": polished})


def _judge_decision(prompt: str) -> tuple[bool, list[list[int]]]:
    """Pass iff the criterion text appears verbatim (folded) in the transcript."""
    criterion = fold(_criterion_text(prompt))
    turns = _transcript_turns(prompt)
    hits = [index for index, _role, text in turns if criterion and criterion in fold(text)]
    return bool(hits), _merge_consecutive(hits)


def _synth_judgment(prompt: str) -> str:
    decision, evidence = _judge_decision(prompt)
    if decision:
        justification = "Le critère est couvert par le dialogue : le médecin aborde explicitement ce point."
    else:
        justification = "Le critère n'apparaît pas dans la transcription : le médecin ne réalise pas cette action."
    return _dump(
        {"justification": justification, "evidence": evidence, "decision": decision}
    )


def _synth_extract(prompt: str) -> str:
    criterion = fold(_criterion_text(prompt))
    content_words = [w for w in re.findall(r"\w+", criterion) if len(w) >= 4]
    hits = []
    for index, _role, text in _transcript_turns(prompt):
        folded = fold(text)
        if any(w in folded for w in content_words):
            hits.append(index)
    return _dump({"relevant": _merge_consecutive(hits)})


def _synth_decompose(prompt: str) -> str:
    text = _criterion_text(prompt)
    for delimiter, op in ((r"\s+ou\s+", "OR"), (r"\s+et\s+", "AND")):
        parts = re.split(delimiter, text, flags=re.IGNORECASE)
        if len(parts) >= 2:
            ids = [chr(ord("A") + i) for i in range(len(parts))]
            subs = {cid: part.strip() for cid, part in zip(ids, parts)}
            expression = f"{op}({', '.join(ids)})"
            return _dump(
                {"composite": True, "sub_criteria": subs, "expression": expression}
            )
    return _dump({"composite": False, "sub_criteria": {}, "expression": ""})


_DISPATCH = {
    "REORDER_CRITERIA": _synth_reorder,
    "IDENTIFY_LEAVES": _synth_leaves,
    "PERTURB_CRITERION": _synth_perturb,
    "GENERATE_SEGMENT": _synth_segment,
    "POLISH_BOUNDARIES": _synth_polish,
    "SILVER_LABEL": _synth_judgment,
    "JUDGE_CRITERION": _synth_judgment,
    "EXTRACT_SEGMENTS": _synth_extract,
    "DECOMPOSE_CRITERION": _synth_decompose,
}


def synthesize(request) -> str:
    """Deterministic response for any pipeline prompt."""
    content = "\n".join(m.content for m in request.messages)
    m = _TASK_RE.search(content)
    if m is None or m.group("task") not in _DISPATCH:
        return _dump({"error": "unrecognized prompt"})
    return _DISPATCH[m.group("task")](content)
