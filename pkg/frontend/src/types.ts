// Payload shapes served by the exercise API. The client renders these
// verbatim and never derives its own numbers from them.

export type CategoryName = "AMCIT" | "SIV" | "P1P2" | "VULNERABLE" | "ISISK";
export type ActionName = "ACCEPT" | "REJECT";

export const CATEGORIES: CategoryName[] = ["AMCIT", "SIV", "P1P2", "VULNERABLE", "ISISK"];

export interface Arrival {
  family_size: number;
  claimed: CategoryName;
}

export interface HistoryEntry {
  t: number;
  family_size: number;
  claimed: CategoryName;
  action: ActionName;
  boarded: boolean;
  reward: number;
}

export interface SessionView {
  id: string;
  status: "active" | "finished";
  advisor: string;
  cursor: number;
  capacity: number;
  time_left: number;
  c_max: number;
  t_max: number;
  reward_total: number;
  accepted_total: number;
  history: HistoryEntry[];
  arrival: Arrival | null;
  belief_mean?: number[];
}

export interface Recommendation {
  action: ActionName;
  q_accept: number | null;
  q_reject: number | null;
  posterior_true: number[];
  belief_mean?: number[];
}

export interface StepSide {
  action: ActionName;
  boarded: boolean;
  reward: number;
}

export interface SummaryStep {
  t: number;
  family_size: number;
  claimed: CategoryName;
  true: CategoryName;
  human: StepSide | null;
  advisor: StepSide | null;
}

export interface SideTotals {
  reward: number;
  accepted_total: number;
  accepted_people: Record<CategoryName, number>;
  arrived_people: Record<CategoryName, number>;
  termination_step: number;
}

export interface Summary {
  partial: boolean;
  human: SideTotals;
  advisor: SideTotals & { kind: string };
  steps: SummaryStep[];
}

export interface DecisionOutcome {
  boarded: boolean;
  reward: number;
}

export interface DecisionResponse {
  outcome: DecisionOutcome;
  view?: SessionView;
  summary?: Summary;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
