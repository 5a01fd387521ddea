import { ApiClient, ApiError } from "./api.js";
import {
  advisorToggled,
  canDecide,
  decisionApplied,
  decisionStarted,
  errorRaised,
  initialState,
  needsRecommendation,
  recommendationLoaded,
  reset,
  sessionLoaded,
  summaryLoaded,
  type ExerciseState,
} from "./state.js";
import {
  advisorPanelHtml,
  arrivalCardHtml,
  beliefChartHtml,
  debriefHtml,
  errorHtml,
  gaugeHtml,
  historyStripHtml,
  statusLineHtml,
} from "./render.js";
import type { ActionName } from "./types.js";

const SESSION_KEY = "evacplan.session";
const api = new ApiClient("");

let state: ExerciseState = initialState();
let countdownSeconds = 0; // 0 = turn-based (default)
let countdownLeft = 0;
let countdownTimer: number | undefined;

const $ = (id: string): HTMLElement => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
};

function setState(next: ExerciseState): void {
  state = next;
  render();
}

// --- session flow ---------------------------------------------------------

async function startSession(): Promise<void> {
  const advisor = ($("advisor-select") as HTMLSelectElement).value;
  const seedRaw = ($("seed-input") as HTMLInputElement).value.trim();
  countdownSeconds = Number(($("pace-select") as HTMLSelectElement).value);
  const options: { advisor: string; seed?: number } = { advisor };
  if (seedRaw !== "") options.seed = Number(seedRaw);
  try {
    const view = await api.createSession(options);
    sessionStorage.setItem(SESSION_KEY, view.id);
    setState(sessionLoaded(state, view));
    armCountdown();
  } catch (err) {
    setState(errorRaised(state, describe(err)));
  }
}

async function resumeSession(id: string): Promise<void> {
  try {
    const view = await api.getSession(id);
    if (view.status === "finished") {
      const summary = await api.getSummary(id);
      setState(summaryLoaded(sessionLoaded(state, view), summary));
      return;
    }
    setState(sessionLoaded(state, view));
  } catch {
    sessionStorage.removeItem(SESSION_KEY);
    setState(reset());
  }
}

async function submitDecision(action: ActionName): Promise<void> {
  if (!canDecide(state) || !state.view) return;
  disarmCountdown();
  setState(decisionStarted(state));
  try {
    const response = await api.postDecision(state.view.id, action, state.view.cursor);
    setState(decisionApplied(state, response));
    if (state.screen === "debrief") {
      sessionStorage.removeItem(SESSION_KEY);
    } else {
      await maybeFetchRecommendation();
      armCountdown();
    }
  } catch (err) {
    if (err instanceof ApiError && err.code === "cursor_conflict" && state.view) {
      // another tab decided first; re-sync from the server
      await resumeSession(state.view.id);
      return;
    }
    setState(errorRaised(state, describe(err)));
  }
}

async function maybeFetchRecommendation(): Promise<void> {
  if (!needsRecommendation(state) || !state.view) return;
  try {
    const rec = await api.getRecommendation(state.view.id);
    setState(recommendationLoaded(state, rec));
  } catch (err) {
    setState(errorRaised(state, describe(err)));
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return String(err);
}

// --- countdown pacing (optional, default off) ------------------------------

function armCountdown(): void {
  disarmCountdown();
  if (countdownSeconds <= 0 || !canDecide(state)) return;
  countdownLeft = countdownSeconds;
  renderCountdown();
  countdownTimer = window.setInterval(() => {
    countdownLeft -= 1;
    renderCountdown();
    if (countdownLeft <= 0) {
      void submitDecision("REJECT"); // the gate stays shut when time runs out
    }
  }, 1000);
}

function disarmCountdown(): void {
  if (countdownTimer !== undefined) {
    window.clearInterval(countdownTimer);
    countdownTimer = undefined;
  }
  renderCountdown();
}

function renderCountdown(): void {
  const el = document.getElementById("countdown");
  if (el) {
    el.textContent =
      countdownTimer !== undefined && countdownSeconds > 0 ? `${countdownLeft}s` : "";
  }
}

// --- rendering -------------------------------------------------------------

function render(): void {
  $("setup-screen").hidden = state.screen !== "setup";
  $("play-screen").hidden = state.screen !== "playing";
  $("debrief-screen").hidden = state.screen !== "debrief";
  $("error-slot").innerHTML = errorHtml(state.error);

  if (state.screen === "playing" && state.view) {
    const view = state.view;
    $("gauges").innerHTML =
      gaugeHtml("seats left", view.capacity, view.c_max, "seats")
      + gaugeHtml("time left", view.time_left, view.t_max, "steps");
    $("arrival-slot").innerHTML = arrivalCardHtml(view);
    $("status-slot").innerHTML = statusLineHtml(view);
    $("history-slot").innerHTML = historyStripHtml(view.history);
    $("belief-slot").innerHTML = state.advisorVisible ? "" : beliefChartHtml(view.belief_mean);
    const decidable = canDecide(state);
    ($("accept-btn") as HTMLButtonElement).disabled = !decidable;
    ($("reject-btn") as HTMLButtonElement).disabled = !decidable;
    $("advisor-slot").innerHTML = state.advisorVisible
      ? state.recommendation
        ? advisorPanelHtml(state.recommendation)
        : `<div class="advisor-body loading">consulting the optimized policy&hellip;</div>`
      : "";
  }
  if (state.screen === "debrief" && state.summary) {
    $("debrief-slot").innerHTML = debriefHtml(state.summary);
  }
}

// --- wiring ----------------------------------------------------------------

export function init(): void {
  $("start-btn").addEventListener("click", () => void startSession());
  $("accept-btn").addEventListener("click", () => void submitDecision("ACCEPT"));
  $("reject-btn").addEventListener("click", () => void submitDecision("REJECT"));
  $("advisor-toggle").addEventListener("change", (event) => {
    const on = (event.target as HTMLInputElement).checked;
    setState(advisorToggled(state, on));
    void maybeFetchRecommendation();
  });
  $("new-session-btn").addEventListener("click", () => {
    sessionStorage.removeItem(SESSION_KEY);
    setState(reset());
  });

  const existing = sessionStorage.getItem(SESSION_KEY);
  if (existing) {
    void resumeSession(existing);
  } else {
    render();
  }
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", init);
}
