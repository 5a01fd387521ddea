import type { DecisionResponse, Recommendation, SessionView, Summary } from "./types.js";

// The client is stateless beyond the session id plus the last server payload;
// everything below is derived from server responses, never computed locally.

export type Screen = "setup" | "playing" | "debrief";

export interface ExerciseState {
  screen: Screen;
  view: SessionView | null;
  summary: Summary | null;
  recommendation: Recommendation | null;
  advisorVisible: boolean;
  busy: boolean;
  error: string | null;
}

export function initialState(): ExerciseState {
  return {
    screen: "setup",
    view: null,
    summary: null,
    recommendation: null,
    advisorVisible: false,
    busy: false,
    error: null,
  };
}

export function sessionLoaded(state: ExerciseState, view: SessionView): ExerciseState {
  if (view.status === "finished") {
    return { ...state, screen: "playing", view, recommendation: null, busy: false, error: null };
  }
  return { ...state, screen: "playing", view, recommendation: null, busy: false, error: null };
}

export function decisionStarted(state: ExerciseState): ExerciseState {
  return { ...state, busy: true, error: null };
}

export function decisionApplied(state: ExerciseState, response: DecisionResponse): ExerciseState {
  if (response.summary) {
    return {
      ...state,
      screen: "debrief",
      summary: response.summary,
      recommendation: null,
      busy: false,
    };
  }
  return {
    ...state,
    view: response.view ?? state.view,
    recommendation: null,
    busy: false,
  };
}

export function summaryLoaded(state: ExerciseState, summary: Summary): ExerciseState {
  return { ...state, screen: "debrief", summary, busy: false };
}

export function recommendationLoaded(
  state: ExerciseState,
  recommendation: Recommendation,
): ExerciseState {
  return { ...state, recommendation };
}

export function advisorToggled(state: ExerciseState, visible: boolean): ExerciseState {
  // hiding the panel also drops the stale recommendation so a later toggle refetches
  return { ...state, advisorVisible: visible, recommendation: visible ? state.recommendation : null };
}

export function errorRaised(state: ExerciseState, message: string): ExerciseState {
  return { ...state, busy: false, error: message };
}

export function reset(): ExerciseState {
  return initialState();
}

/** A decision may be posted only for the arrival currently shown. */
export function canDecide(state: ExerciseState): boolean {
  return (
    state.screen === "playing"
    && !state.busy
    && state.view !== null
    && state.view.status === "active"
    && state.view.arrival !== null
  );
}

/** The advisor panel needs a fetch only when shown and not yet loaded. */
export function needsRecommendation(state: ExerciseState): boolean {
  return state.advisorVisible && state.recommendation === null && canDecide(state);
}
