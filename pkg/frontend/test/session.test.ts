/**
 * Scripted 20-step session replayed through the client against recorded
 * wire traffic from the real service (test/fixtures/session20.json).
 * Verifies the console renders the server's own kWh/switch totals and
 * that the exported CSV re-validates through the dataset CLI.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { SessionClient, type SocketHandlers, type Transport } from "../src/client.js";
import type { ActionName, StateMessage } from "../src/protocol.js";

interface FixtureStep {
  action: ActionName;
  reply: StateMessage;
}

interface Fixture {
  scenario: unknown;
  created: { session_id: string; state: { observation: unknown } };
  steps: FixtureStep[];
  export_csv: string;
  final_totals: { kwh: number; switches: number; reward_sum: number };
}

const fixture: Fixture = JSON.parse(
  readFileSync(new URL("./fixtures/session20.json", import.meta.url), "utf-8"),
);

/** Transport that speaks the recorded traffic instead of a network. */
function scriptedTransport() {
  let handlers: SocketHandlers | null = null;
  const sent: unknown[] = [];
  const transport: Transport = {
    async postJson(url) {
      expect(url.endsWith("/sessions")).toBe(true);
      return fixture.created;
    },
    async getText(url) {
      expect(url).toContain(fixture.created.session_id);
      return fixture.export_csv;
    },
    openSocket(_url, h) {
      handlers = h;
      return {
        send: (data) => sent.push(data),
        close: () => h.onClose(),
      };
    },
  };
  return {
    transport,
    sent,
    deliver(msg: StateMessage) {
      handlers!.onMessage(msg);
    },
  };
}

describe("scripted 20-step session", () => {
  it("replays with one-in-flight discipline and server-matching totals", async () => {
    const { transport, sent, deliver } = scriptedTransport();
    const client = new SessionClient(transport, "http://test");
    await client.connect(fixture.scenario as never);
    expect(client.current.connection).toBe("connected");

    const switchTrace: number[] = [];
    for (const step of fixture.steps) {
      expect(client.actEnabled).toBe(true);
      client.act(step.action);
      expect(client.actEnabled).toBe(false); // locked until the reply lands
      expect(() => client.act("NOP")).toThrow("in flight");
      deliver(step.reply);
      expect(client.actEnabled).toBe(true);
      switchTrace.push(client.current.totals.switches);
    }

    expect(sent.length).toBe(fixture.steps.length);
    expect(client.current.steps).toBe(20);
    // rendered totals are the server's, verbatim
    expect(client.current.totals).toEqual(fixture.final_totals);

    // pressing NP2 while NP1 runs costs two switches; repeating it none
    expect(fixture.steps[0]?.action).toBe("NP1");
    expect(fixture.steps[1]?.action).toBe("NP2");
    expect(fixture.steps[2]?.action).toBe("NP2");
    expect(switchTrace[1]! - switchTrace[0]!).toBe(2);
    expect(switchTrace[2]! - switchTrace[1]!).toBe(0);
  });

  it("export carries one row per step and embeds the session id", async () => {
    const { transport, deliver } = scriptedTransport();
    const client = new SessionClient(transport, "http://test");
    await client.connect(fixture.scenario as never);
    for (const step of fixture.steps) {
      client.act(step.action);
      deliver(step.reply);
    }
    const { filename, text } = await client.exportCsv();
    expect(filename).toBe(`session-${fixture.created.session_id}.csv`);
    const lines = text.trim().split("\n");
    expect(lines.length).toBe(1 + fixture.steps.length);
    const actionColumn = lines[0]!.split(",").indexOf("action");
    const actions = lines.slice(1).map((l) => l.split(",")[actionColumn]);
    expect(actions).toEqual(fixture.steps.map((s) => s.action));
  });

  it("exported file re-validates through the dataset CLI", () => {
    const dir = mkdtempSync(join(tmpdir(), "console-export-"));
    const path = join(dir, "export.csv");
    writeFileSync(path, fixture.export_csv);
    let available = true;
    try {
      execFileSync("python3", ["-c", "import pumpsched"], { stdio: "ignore" });
    } catch {
      available = false;
    }
    if (!available) {
      console.warn("pumpsched CLI not importable; skipping CSV validation");
      return;
    }
    const out = execFileSync(
      "python3",
      ["-m", "pumpsched.cli", "dataset", "validate", path],
      { encoding: "utf-8" },
    );
    expect(out).toContain("20 rows valid");
  });
});
