/**
 * DOM wiring for the operator console.
 *
 * The page lets a human schedule pumps minute by minute against live
 * simulated demand: pick a server, connect, press NP1..NP4/NOP, watch the
 * tank gauge, power, switches and reward, and download the recorded
 * trajectory (which re-enters the dataset pipeline unchanged).
 */

import { browserTransport, SessionClient } from "./client.js";
import { drawSeries, drawTankGauge } from "./gauges.js";
import { ACTIONS, type ActionName } from "./protocol.js";
import { canAct, type ConsoleState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const serverInput = el<HTMLInputElement>("server-url");
const levelInput = el<HTMLInputElement>("initial-level");
const rewardSelect = el<HTMLSelectElement>("reward-variant");
const clockSelect = el<HTMLSelectElement>("clock-mode");
const connectButton = el<HTMLButtonElement>("connect");
const exportButton = el<HTMLButtonElement>("export");
const banner = el<HTMLDivElement>("banner");
const statusBox = el<HTMLSpanElement>("status");
const totalsBox = el<HTMLDivElement>("totals");
const obsBox = el<HTMLDivElement>("observation");
const tankCanvas = el<HTMLCanvasElement>("tank-gauge");
const levelChart = el<HTMLCanvasElement>("chart-level");
const demandChart = el<HTMLCanvasElement>("chart-demand");
const kwChart = el<HTMLCanvasElement>("chart-kw");
const rewardChart = el<HTMLCanvasElement>("chart-reward");
const buttonBar = el<HTMLDivElement>("actions");

let client: SessionClient | null = null;

const actionButtons = new Map<ActionName, HTMLButtonElement>();
for (const action of ACTIONS) {
  const button = document.createElement("button");
  button.textContent = action;
  button.className = action === "NOP" ? "action nop" : "action pump";
  button.disabled = true;
  button.onclick = () => {
    if (client?.actEnabled) client.act(action);
  };
  buttonBar.appendChild(button);
  actionButtons.set(action, button);
}

function showBanner(text: string, kind: "error" | "info"): void {
  banner.textContent = text;
  banner.className = `banner ${kind}`;
  banner.style.display = "block";
  if (kind === "info") setTimeout(() => (banner.style.display = "none"), 4000);
}

function render(s: ConsoleState): void {
  statusBox.textContent =
    s.connection + (s.sessionId ? ` (${s.sessionId.slice(0, 8)})` : "");
  const enabled = canAct(s);
  for (const [action, button] of actionButtons) {
    button.disabled = !enabled;
    button.classList.toggle(
      "active",
      s.observation?.prev_action === action && action !== "NOP",
    );
  }
  exportButton.disabled = !(s.sessionId && s.steps > 0);

  totalsBox.innerHTML =
    `<b>step</b> ${s.steps} · <b>episode</b> ${s.episode}` +
    ` · <b>kWh</b> ${s.totals.kwh.toFixed(2)}` +
    ` · <b>switches</b> ${s.totals.switches}` +
    ` · <b>Σreward</b> ${s.totals.reward_sum.toFixed(2)}`;

  if (s.observation) {
    const o = s.observation;
    const minute = String(Math.floor(o.minute_of_day / 60)).padStart(2, "0") +
      ":" + String(o.minute_of_day % 60).padStart(2, "0");
    obsBox.innerHTML =
      `<b>time</b> ${minute} (month ${o.month})` +
      ` · <b>demand</b> ${o.demand.toFixed(1)} m³/h` +
      ` · <b>running</b> ${o.prev_action}` +
      ` · <b>water quality</b> ${o.water_quality ? "exchanged" : "pending"}`;
  }

  drawTankGauge(tankCanvas, s.observation?.tank_level ?? null, s.safetyWarning);
  drawSeries(levelChart, s.series, (p) => p.level, "#2980b9", "tank level, m");
  drawSeries(demandChart, s.series, (p) => p.demand, "#f39c12", "demand, m³/h");
  drawSeries(kwChart, s.series, (p) => p.kw, "#e74c3c", "electrical power, kW");
  drawSeries(rewardChart, s.series, (p) => p.reward, "#27ae60", "reward");

  if (s.lastError) showBanner(s.lastError, "error");
  if (s.episodeBanner !== null) {
    showBanner(`day complete, episode ${s.episodeBanner + 1} begins reset-free`, "info");
  }
}

connectButton.onclick = async () => {
  client?.close();
  client = new SessionClient(browserTransport(), serverInput.value.replace(/\/$/, ""));
  client.subscribe(render);
  try {
    await client.connect({
      initial_level: Number(levelInput.value),
      reward: rewardSelect.value as "v1" | "v2",
      clock: { mode: clockSelect.value as "manual" | "timed" },
    });
  } catch (err) {
    showBanner(`connection failed: ${String(err)}`, "error");
  }
};

exportButton.onclick = async () => {
  if (!client) return;
  try {
    const { filename, text } = await client.exportCsv();
    const blob = new Blob([text], { type: "text/csv" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = filename;
    link.click();
    URL.revokeObjectURL(link.href);
  } catch (err) {
    showBanner(String(err), "error");
  }
};
