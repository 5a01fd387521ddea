import { CATEGORIES } from "./types.js";
import type {
  CategoryName,
  HistoryEntry,
  Recommendation,
  SessionView,
  Summary,
} from "./types.js";

// Pure HTML builders so rendering is testable without a DOM. Numbers shown
// here come straight from server payloads; only formatting happens client-side.

export const CATEGORY_COLORS: Record<CategoryName, string> = {
  AMCIT: "#2563eb",
  SIV: "#0891b2",
  P1P2: "#ca8a04",
  VULNERABLE: "#9333ea",
  ISISK: "#111827",
};

const esc = (value: unknown): string =>
  String(value).replace(/[&<>"']/g, (ch) => `&#${ch.charCodeAt(0)};`);

export function formatReward(value: number): string {
  return value.toLocaleString("en-US", { maximumFractionDigits: 1 });
}

export function gaugeHtml(label: string, value: number, max: number, unit: string): string {
  const pct = max > 0 ? Math.max(0, Math.min(100, (value / max) * 100)) : 0;
  return `
    <div class="gauge">
      <div class="gauge-label">${esc(label)}</div>
      <div class="gauge-bar"><div class="gauge-fill" style="width:${pct.toFixed(2)}%"></div></div>
      <div class="gauge-value">${esc(value)} / ${esc(max)} ${esc(unit)}</div>
    </div>`;
}

export function arrivalCardHtml(view: SessionView): string {
  if (!view.arrival) {
    return `<div class="arrival-card empty">No family at the gate</div>`;
  }
  const { claimed, family_size } = view.arrival;
  const people = "&#9679;".repeat(Math.min(family_size, 13));
  return `
    <div class="arrival-card">
      <div class="claimed-badge" style="background:${CATEGORY_COLORS[claimed]}">${esc(claimed)}</div>
      <div class="family-size">family of ${esc(family_size)}</div>
      <div class="family-dots">${people}</div>
      <div class="claim-note">claimed status &mdash; the actual status stays hidden until the debrief</div>
    </div>`;
}

function barsHtml(values: number[], cssClass: string): string {
  const rows = values
    .map((p, i) => {
      const cat = CATEGORIES[i];
      return `
        <div class="bar-row">
          <span class="bar-name">${cat}</span>
          <div class="bar-track"><div class="bar-fill ${cssClass}"
            style="width:${(p * 100).toFixed(2)}%;background:${CATEGORY_COLORS[cat]}"></div></div>
          <span class="bar-pct">${(p * 100).toFixed(1)}%</span>
        </div>`;
    })
    .join("");
  return `<div class="bars">${rows}</div>`;
}

export function advisorPanelHtml(rec: Recommendation): string {
  const q = (value: number | null) => (value === null ? "&ndash;" : formatReward(value));
  const belief = rec.belief_mean
    ? `<h4>population belief</h4>${barsHtml(rec.belief_mean, "belief")}`
    : "";
  return `
    <div class="advisor-body">
      <div class="advisor-action ${rec.action === "ACCEPT" ? "accept" : "reject"}">
        advisor: ${rec.action}
      </div>
      <div class="advisor-q">
        <span>Q(accept) = ${q(rec.q_accept)}</span>
        <span>Q(reject) = ${q(rec.q_reject)}</span>
      </div>
      <h4>chance the claim is each true status</h4>
      ${barsHtml(rec.posterior_true, "posterior")}
      ${belief}
    </div>`;
}

export function beliefChartHtml(beliefMean: number[] | undefined): string {
  if (!beliefMean) return "";
  return `<div class="belief-chart"><h4>population belief</h4>${barsHtml(beliefMean, "belief")}</div>`;
}

export function historyStripHtml(history: HistoryEntry[]): string {
  // one node per decided arrival: radius tracks family size, color the decision
  const nodes = history
    .map((entry) => {
      const size = 10 + entry.family_size * 2;
      const cls = entry.action === "ACCEPT" ? "accepted" : "rejected";
      const board = entry.action === "ACCEPT" && !entry.boarded ? " no-board" : "";
      return `<span class="history-node ${cls}${board}"
        style="width:${size}px;height:${size}px"
        title="t=${entry.t} ${esc(entry.claimed)} family of ${entry.family_size}: ${entry.action}${
          entry.action === "ACCEPT" ? (entry.boarded ? ", boarded" : ", did not board") : ""
        }"></span>`;
    })
    .join("");
  return `<div class="history-strip">${nodes}</div>`;
}

export function statusLineHtml(view: SessionView): string {
  return `
    <div class="status-line">
      <span>reward <strong>${formatReward(view.reward_total)}</strong></span>
      <span>accepted <strong>${esc(view.accepted_total)}</strong> people</span>
      <span>step <strong>${esc(view.cursor)}</strong> of ${esc(view.t_max)}</span>
    </div>`;
}

function totalsRowsHtml(summary: Summary): string {
  const rows = CATEGORIES.map((cat) => {
    const h = summary.human;
    const a = summary.advisor;
    return `
      <tr>
        <td><span class="dot" style="background:${CATEGORY_COLORS[cat]}"></span>${cat}</td>
        <td>${h.accepted_people[cat]} / ${h.arrived_people[cat]}</td>
        <td>${a.accepted_people[cat]} / ${a.arrived_people[cat]}</td>
      </tr>`;
  }).join("");
  return rows;
}

export function debriefHtml(summary: Summary): string {
  const { human, advisor } = summary;
  const partial = summary.partial
    ? `<p class="partial-note">partial debrief &mdash; the episode is still running</p>`
    : "";
  return `
    <div class="debrief">
      <h2>Debrief: you vs. the ${esc(advisor.kind)} policy</h2>
      ${partial}
      <table class="debrief-table">
        <thead>
          <tr><th></th><th>you</th><th>advisor</th></tr>
        </thead>
        <tbody>
          <tr><td>cumulative reward</td>
              <td>${formatReward(human.reward)}</td>
              <td>${formatReward(advisor.reward)}</td></tr>
          <tr><td>people accepted</td>
              <td>${human.accepted_total}</td>
              <td>${advisor.accepted_total}</td></tr>
          <tr><td>steps played</td>
              <td>${human.termination_step}</td>
              <td>${advisor.termination_step}</td></tr>
          <tr class="section"><td colspan="3">accepted / arrived by true status</td></tr>
          ${totalsRowsHtml(summary)}
        </tbody>
      </table>
    </div>`;
}

export function errorHtml(message: string | null): string {
  return message ? `<div class="error-banner">${esc(message)}</div>` : "";
}
