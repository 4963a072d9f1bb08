/**
 * Pure view state for the review screen.
 *
 * All transitions return a new state object; nothing in here touches the
 * network or the DOM, so every interaction sequence can be replayed in
 * unit tests.
 */

import type { EvidenceRange, LabelSet, Transcript } from "./api.js";

export interface Draft {
  decision: boolean;
  note: string;
}

export interface ViewState {
  transcript: Transcript | null;
  labels: LabelSet | null;
  selectedCriterion: string | null;
  /** Unsubmitted overrides, keyed by criterion id.  Kept across failures. */
  drafts: Record<string, Draft>;
  error: string | null;
  pending: boolean;
}

export function initialState(): ViewState {
  return {
    transcript: null,
    labels: null,
    selectedCriterion: null,
    drafts: {},
    error: null,
    pending: false,
  };
}

export function withTranscript(
  state: ViewState,
  transcript: Transcript,
  labels: LabelSet,
): ViewState {
  return {
    ...state,
    transcript,
    labels,
    selectedCriterion: null,
    drafts: {},
    error: null,
  };
}

export function withLabels(state: ViewState, labels: LabelSet): ViewState {
  return { ...state, labels };
}

export function selectCriterion(
  state: ViewState,
  criterionId: string | null,
): ViewState {
  if (
    criterionId !== null &&
    (state.labels === null || !(criterionId in state.labels.entries))
  ) {
    throw new Error(`unknown criterion ${criterionId}`);
  }
  return { ...state, selectedCriterion: criterionId };
}

/** Evidence ranges of the selected criterion, as stored in its label. */
export function highlightedRanges(state: ViewState): EvidenceRange[] {
  if (state.labels === null || state.selectedCriterion === null) return [];
  const entry = state.labels.entries[state.selectedCriterion];
  return entry ? entry.evidence : [];
}

/** Turn indices covered by the highlighted ranges. */
export function highlightedTurnIndices(state: ViewState): Set<number> {
  const indices = new Set<number>();
  for (const [start, end] of highlightedRanges(state)) {
    for (let i = start; i <= end; i++) indices.add(i);
  }
  return indices;
}

export function setDraft(
  state: ViewState,
  criterionId: string,
  draft: Draft,
): ViewState {
  return { ...state, drafts: { ...state.drafts, [criterionId]: draft } };
}

export function clearDraft(state: ViewState, criterionId: string): ViewState {
  const drafts = { ...state.drafts };
  delete drafts[criterionId];
  return { ...state, drafts };
}

/** The pending draft, or a draft pre-filled from the current label. */
export function draftFor(state: ViewState, criterionId: string): Draft {
  const existing = state.drafts[criterionId];
  if (existing) return existing;
  const entry = state.labels?.entries[criterionId];
  return { decision: entry ? entry.decision : false, note: "" };
}

export function withError(state: ViewState, error: string): ViewState {
  return { ...state, error, pending: false };
}

export function clearError(state: ViewState): ViewState {
  return { ...state, error: null };
}
