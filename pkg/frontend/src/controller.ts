/**
 * Async workflows tying the API client to the view state.
 *
 * Overrides are optimistic about nothing: the decision shown in the UI
 * always comes from a refetch of the server's reviewed labels, and a
 * failed submission keeps the draft so the reviewer can retry.
 */

import { ReviewApi } from "./api.js";
import {
  ViewState,
  clearDraft,
  clearError,
  draftFor,
  withError,
  withLabels,
  withTranscript,
} from "./state.js";

export async function loadTranscript(
  api: ReviewApi,
  state: ViewState,
  transcriptId: string,
  mode = "strict",
): Promise<ViewState> {
  const [transcript, labels] = await Promise.all([
    api.getTranscript(transcriptId),
    api.getLabels(transcriptId, mode),
  ]);
  return withTranscript(state, transcript, labels);
}

export async function submitDraft(
  api: ReviewApi,
  state: ViewState,
  criterionId: string,
  reviewer: string,
  mode = "strict",
): Promise<ViewState> {
  if (state.transcript === null) {
    return withError(state, "aucune transcription chargée");
  }
  const draft = draftFor(state, criterionId);
  const transcriptId = state.transcript.id;
  try {
    await api.submitOverride(
      transcriptId,
      criterionId,
      { decision: draft.decision, reviewer, note: draft.note },
      mode,
    );
  } catch (error) {
    // keep the draft: the reviewer's input survives the failure
    const message = error instanceof Error ? error.message : String(error);
    return withError(state, message);
  }
  const labels = await api.getLabels(transcriptId, mode);
  return clearError(clearDraft(withLabels(state, labels), criterionId));
}
