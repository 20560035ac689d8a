/**
 * Session client: owns the state machine and talks to the service.
 *
 * Transports are injected so tests can drive the client with scripted
 * messages; the browser implementation below uses fetch + WebSocket.
 */

import { actMessage, type ActionName, type CreatedMessage, type StreamMessage } from "./protocol.js";
import {
  canAct,
  canExport,
  initialState,
  reduce,
  type ConsoleEvent,
  type ConsoleState,
} from "./state.js";

export interface SocketHandlers {
  onMessage(msg: StreamMessage): void;
  onClose(): void;
  onError(message: string): void;
}

export interface SocketHandle {
  send(data: unknown): void;
  close(): void;
}

export interface Transport {
  postJson(url: string, body: unknown): Promise<unknown>;
  getText(url: string): Promise<string>;
  openSocket(url: string, handlers: SocketHandlers): SocketHandle;
}

export interface Scenario {
  initial_level?: number;
  reward?: "v1" | "v2";
  demand?: { days?: number; seed?: number; mean?: number };
  clock?: { mode: "manual" | "timed"; minutes_per_second?: number };
}

export class SessionClient {
  private state: ConsoleState = initialState();
  private socket: SocketHandle | null = null;
  private listeners: Array<(s: ConsoleState) => void> = [];

  constructor(
    private readonly transport: Transport,
    private readonly baseUrl: string,
  ) {}

  get current(): ConsoleState {
    return this.state;
  }

  subscribe(listener: (s: ConsoleState) => void): void {
    this.listeners.push(listener);
  }

  dispatch(event: ConsoleEvent): void {
    this.state = reduce(this.state, event);
    for (const listener of this.listeners) listener(this.state);
  }

  async connect(scenario: Scenario = {}): Promise<void> {
    this.socket?.close();
    this.dispatch({ type: "connectRequested" });
    let created: CreatedMessage;
    try {
      created = (await this.transport.postJson(
        `${this.baseUrl}/sessions`,
        scenario,
      )) as CreatedMessage;
      if (created.kind !== "created") {
        throw new Error((created as { message?: string }).message ?? "rejected");
      }
    } catch (err) {
      this.dispatch({ type: "connectionFailed", message: String(err) });
      throw err;
    }
    this.dispatch({
      type: "created",
      sessionId: created.session_id,
      clockMode: created.clock_mode,
      observation: created.state.observation,
      totals: created.state.totals,
    });
    const wsUrl = `${this.baseUrl.replace(/^http/, "ws")}/sessions/${created.session_id}/stream`;
    this.socket = this.transport.openSocket(wsUrl, {
      onMessage: (msg) => this.onStream(msg),
      onClose: () => this.dispatch({ type: "disconnected" }),
      onError: (message) => this.dispatch({ type: "connectionFailed", message }),
    });
  }

  private onStream(msg: StreamMessage): void {
    switch (msg.kind) {
      case "state":
        // the connect-time snapshot repeats step 0; skip the no-op
        if (msg.step === 0 && this.state.steps === 0 && !this.state.inFlight) return;
        this.dispatch({ type: "state", msg });
        return;
      case "episode_end":
        this.dispatch({ type: "episodeEnd", episode: msg.episode });
        return;
      case "error":
        this.dispatch({ type: "serverError", message: msg.message });
        return;
    }
  }

  /** Send one action; rejects while a previous act is unanswered. */
  act(action: ActionName): void {
    if (!this.socket) throw new Error("not connected");
    this.dispatch({ type: "actSent", action }); // throws when not allowed
    this.socket.send(actMessage(action));
  }

  get actEnabled(): boolean {
    return canAct(this.state);
  }

  get exportEnabled(): boolean {
    return canExport(this.state);
  }

  async exportCsv(): Promise<{ filename: string; text: string }> {
    if (!canExport(this.state)) throw new Error("nothing to export yet");
    const text = await this.transport.getText(
      `${this.baseUrl}/sessions/${this.state.sessionId}/export`,
    );
    return { filename: `session-${this.state.sessionId}.csv`, text };
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
  }
}

export function browserTransport(): Transport {
  return {
    async postJson(url, body) {
      const response = await fetch(url, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
      const parsed = (await response.json()) as { message?: string };
      if (!response.ok) throw new Error(parsed.message ?? response.statusText);
      return parsed;
    },
    async getText(url) {
      const response = await fetch(url);
      if (!response.ok) throw new Error(`${response.status} ${response.statusText}`);
      return response.text();
    },
    openSocket(url, handlers) {
      const ws = new WebSocket(url);
      ws.onmessage = (ev) => handlers.onMessage(JSON.parse(String(ev.data)));
      ws.onclose = () => handlers.onClose();
      ws.onerror = () => handlers.onError("stream connection error");
      return {
        send: (data) => ws.send(JSON.stringify(data)),
        close: () => ws.close(),
      };
    },
  };
}
