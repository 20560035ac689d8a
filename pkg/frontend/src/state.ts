/**
 * Pure console state machine.
 *
 * The reducer is the single place UI state changes, which makes the
 * one-outstanding-act discipline testable: `actSent` is only legal when
 * `canAct` holds, and only a `state` or `error` reply clears the in-flight
 * latch.  Cumulative kWh/switch totals always mirror the server's numbers;
 * the client never recomputes them.
 */

import type {
  ActionName,
  ObservationPayload,
  StateMessage,
  Totals,
} from "./protocol.js";

export type Connection = "idle" | "connecting" | "connected" | "closed" | "failed";

export interface SeriesPoint {
  step: number;
  level: number;
  demand: number;
  kw: number;
  reward: number;
}

export interface ConsoleState {
  connection: Connection;
  sessionId: string | null;
  clockMode: "manual" | "timed";
  inFlight: boolean;
  pendingAction: ActionName | null;
  observation: ObservationPayload | null;
  lastState: StateMessage | null;
  totals: Totals;
  series: SeriesPoint[];
  seriesCap: number;
  steps: number;
  episode: number;
  episodeBanner: number | null;
  lastError: string | null;
  safetyWarning: boolean;
}

export type ConsoleEvent =
  | { type: "connectRequested" }
  | {
      type: "created";
      sessionId: string;
      clockMode: "manual" | "timed";
      observation: ObservationPayload;
      totals: Totals;
    }
  | { type: "actSent"; action: ActionName }
  | { type: "state"; msg: StateMessage }
  | { type: "episodeEnd"; episode: number }
  | { type: "serverError"; message: string }
  | { type: "connectionFailed"; message: string }
  | { type: "disconnected" };

export const EMPTY_TOTALS: Totals = { kwh: 0, switches: 0, reward_sum: 0 };

export function initialState(seriesCap = 240): ConsoleState {
  return {
    connection: "idle",
    sessionId: null,
    clockMode: "manual",
    inFlight: false,
    pendingAction: null,
    observation: null,
    lastState: null,
    totals: EMPTY_TOTALS,
    series: [],
    seriesCap,
    steps: 0,
    episode: 0,
    episodeBanner: null,
    lastError: null,
    safetyWarning: false,
  };
}

export function canAct(s: ConsoleState): boolean {
  return s.connection === "connected" && !s.inFlight;
}

export function canExport(s: ConsoleState): boolean {
  return s.sessionId !== null && s.steps > 0;
}

export class IllegalEventError extends Error {}

export function reduce(s: ConsoleState, e: ConsoleEvent): ConsoleState {
  switch (e.type) {
    case "connectRequested":
      return { ...initialState(s.seriesCap), connection: "connecting" };

    case "created":
      return {
        ...s,
        connection: "connected",
        sessionId: e.sessionId,
        clockMode: e.clockMode,
        observation: e.observation,
        totals: e.totals,
        lastError: null,
      };

    case "actSent": {
      if (!canAct(s)) {
        throw new IllegalEventError(
          s.inFlight
            ? "an act is already in flight"
            : `cannot act while ${s.connection}`,
        );
      }
      // timed sessions only latch the action server-side; no reply is owed
      if (s.clockMode === "timed") return { ...s, pendingAction: e.action };
      return { ...s, inFlight: true, pendingAction: e.action };
    }

    case "state": {
      const point: SeriesPoint = {
        step: e.msg.step,
        level: e.msg.observation.tank_level,
        demand: e.msg.observation.demand,
        kw: e.msg.info.kw ?? 0,
        reward: e.msg.reward,
      };
      const series = [...s.series, point];
      if (series.length > s.seriesCap) series.splice(0, series.length - s.seriesCap);
      return {
        ...s,
        inFlight: false,
        pendingAction: null,
        observation: e.msg.observation,
        lastState: e.msg,
        totals: e.msg.totals, // server-reported running totals, verbatim
        series,
        steps: e.msg.step,
        episode: e.msg.episode,
        safetyWarning: e.msg.info.safety_violation ?? false,
        lastError: null,
      };
    }

    case "episodeEnd":
      return { ...s, episodeBanner: e.episode };

    case "serverError":
      // the env was left untouched; just unlock and surface the message
      return { ...s, inFlight: false, pendingAction: null, lastError: e.message };

    case "connectionFailed":
      return { ...s, connection: "failed", inFlight: false, lastError: e.message };

    case "disconnected":
      return { ...s, connection: "closed", inFlight: false };
  }
}
