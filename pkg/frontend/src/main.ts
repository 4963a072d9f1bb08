/**
 * DOM wiring for the review screen: station picker, transcript viewer with
 * evidence highlighting, criterion list with decision overrides.
 *
 * Served by the review API itself (``oscebench review --ui-dir frontend``),
 * so same-origin requests need no base URL.
 */

import { ReviewApi } from "./api.js";
import { loadTranscript, submitDraft } from "./controller.js";
import {
  ViewState,
  draftFor,
  highlightedTurnIndices,
  initialState,
  selectCriterion,
  setDraft,
} from "./state.js";

const api = new ReviewApi(
  "",
  new URLSearchParams(window.location.search).get("token") ?? "",
);
const reviewer =
  new URLSearchParams(window.location.search).get("reviewer") ?? "reviewer";

let state: ViewState = initialState();

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function render(): void {
  const root = document.getElementById("app");
  if (!root) return;
  root.replaceChildren();

  if (state.error) {
    root.appendChild(el("div", "error", `Erreur : ${state.error}`));
  }
  if (!state.transcript || !state.labels) {
    root.appendChild(el("p", "hint", "Choisissez une transcription."));
    return;
  }

  const highlighted = highlightedTurnIndices(state);
  const viewer = el("section", "transcript");
  for (const turn of state.transcript.turns) {
    const line = el(
      "p",
      highlighted.has(turn.index) ? "turn highlight" : "turn",
      `#${turn.index} ${turn.role} : ${turn.text}`,
    );
    line.dataset.index = String(turn.index);
    viewer.appendChild(line);
  }
  root.appendChild(viewer);

  const list = el("section", "criteria");
  for (const [criterionId, entry] of Object.entries(state.labels.entries)) {
    const row = el("div", "criterion");
    if (criterionId === state.selectedCriterion) row.classList.add("selected");
    const button = el(
      "button",
      entry.decision ? "decision pass" : "decision fail",
      `${criterionId} — ${entry.decision ? "validé" : "non validé"}` +
        (entry.flagged ? " (à revoir)" : ""),
    );
    button.addEventListener("click", () => {
      state = selectCriterion(state, criterionId);
      render();
    });
    row.appendChild(button);

    if (criterionId === state.selectedCriterion) {
      const draft = draftFor(state, criterionId);
      const toggle = el(
        "button",
        "override",
        draft.decision ? "Marquer non validé" : "Marquer validé",
      );
      toggle.addEventListener("click", () => {
        state = setDraft(state, criterionId, {
          ...draft,
          decision: !draft.decision,
        });
        render();
      });
      const note = el("input") as HTMLInputElement;
      note.placeholder = "note de revue";
      note.value = draft.note;
      note.addEventListener("input", () => {
        state = setDraft(state, criterionId, {
          ...draftFor(state, criterionId),
          note: note.value,
        });
      });
      const submit = el("button", "submit", "Enregistrer");
      submit.addEventListener("click", () => {
        void submitDraft(api, state, criterionId, reviewer).then((next) => {
          state = next;
          render();
        });
      });
      row.append(toggle, note, submit);
    }
    list.appendChild(row);
  }
  root.appendChild(list);
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  let transcriptId = params.get("transcript");
  if (!transcriptId) {
    const stations = await api.listStations();
    const first = stations[0];
    if (!first) return render();
    const detail = await api.getStation(first.id);
    transcriptId = detail.transcript_ids[0] ?? null;
  }
  if (transcriptId) {
    state = await loadTranscript(api, state, transcriptId);
  }
  render();
}

void boot();
