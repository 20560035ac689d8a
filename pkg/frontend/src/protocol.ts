/**
 * Wire types for the session service.
 *
 * HTTP: POST /sessions, GET /sessions/:id/export, GET /health.
 * Stream: WebSocket at /sessions/:id/stream carrying these JSON messages,
 * all versioned with `v`.  Every `act` the client sends is answered by
 * exactly one `state` or one `error`; `episode_end` notices arrive after
 * the boundary state.
 */

export type ActionName = "NP1" | "NP2" | "NP3" | "NP4" | "NOP";

export const ACTIONS: readonly ActionName[] = ["NP1", "NP2", "NP3", "NP4", "NOP"];

export interface ObservationPayload {
  tank_level: number;
  demand: number;
  minute_of_day: number;
  month: number;
  prev_action: ActionName;
  time_running: number[];
  water_quality: boolean;
}

export interface Totals {
  kwh: number;
  switches: number;
  reward_sum: number;
}

export interface StepInfo {
  switch: boolean;
  kw: number;
  q: number;
  head: number;
  overflow: boolean;
  empty: boolean;
  safety_violation: boolean;
  episode_end: boolean;
}

export interface StateMessage {
  v: number;
  kind: "state";
  session_id: string;
  step: number;
  episode: number;
  observation: ObservationPayload;
  reward: number;
  info: Partial<StepInfo>;
  totals: Totals;
}

export interface CreatedMessage {
  v: number;
  kind: "created";
  session_id: string;
  clock_mode: "manual" | "timed";
  minutes_per_second: number;
  reward_variant: string;
  state: { observation: ObservationPayload; totals: Totals };
}

export interface EpisodeEndMessage {
  v: number;
  kind: "episode_end";
  session_id: string;
  episode: number;
}

export interface ErrorMessage {
  v: number;
  kind: "error";
  message: string;
}

export type StreamMessage = StateMessage | EpisodeEndMessage | ErrorMessage;

export interface ActMessage {
  v: number;
  kind: "act";
  action: ActionName;
}

export function actMessage(action: ActionName): ActMessage {
  return { v: 1, kind: "act", action };
}
