// Browser entry point: wires the socket, keyboard, panel, and canvas.
//
// One WebSocket feeds one SessionView; a requestAnimationFrame loop
// repaints from it.  All command traffic flows through the PanelModel
// or the InputEmitter so every pending change has a correlation id.

import { InputEmitter, keyLegend, moveKeyFor } from "./input.js";
import { PanelModel, type PanelField } from "./panel.js";
import { commandFrame, parseServerFrame, type Command } from "./protocol.js";
import { Renderer } from "./render.js";
import { SessionView } from "./session.js";

const RECONNECT_DELAY_MS = 1000;

function wsUrl(): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}

function main(): void {
  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas context unavailable");

  const view = new SessionView();
  const renderer = new Renderer(ctx, canvas.width, canvas.height);

  let socket: WebSocket | null = null;
  const sendCommand = (cmd: Command, id: number): void => {
    view.track(id, cmd.action, "agent" in cmd ? cmd.agent : undefined, performance.now());
    socket?.send(commandFrame(cmd, id));
  };

  const panel = new PanelModel(sendCommand, () => view.issueId());
  const emitter = new InputEmitter(
    (sample) =>
      sendCommand(
        { action: "operator-input", dx: sample.dx, dy: sample.dy, dtheta: sample.dtheta, timestamp: sample.timestamp },
        view.issueId(),
      ),
    { onDrop: (n) => panel.onError({ type: "error", version: 1, message: `dropped ${n} buffered inputs` }) },
  );

  function connect(): void {
    view.connection = "connecting";
    const ws = new WebSocket(wsUrl());
    socket = ws;
    ws.onopen = () => {
      view.connection = "open";
      emitter.setConnected(true, performance.now());
    };
    ws.onmessage = (event) => {
      const frame = parseServerFrame(String(event.data));
      if (!frame) return;
      view.handleFrame(frame, performance.now());
      if (frame.type === "ack") panel.onAck(frame);
      if (frame.type === "error") panel.onError(frame);
      if (frame.type === "hello" || frame.type === "snapshot") {
        panel.syncRoster(frame.agents);
        refreshPanel();
      }
    };
    ws.onclose = () => {
      view.connection = "closed";
      emitter.setConnected(false, performance.now());
      socket = null;
      setTimeout(connect, RECONNECT_DELAY_MS);
    };
  }

  // -- panel DOM ---------------------------------------------------------

  const rosterDiv = document.getElementById("roster") as HTMLDivElement;
  const toastsDiv = document.getElementById("toasts") as HTMLDivElement;
  const statusSpan = document.getElementById("status") as HTMLSpanElement;
  const rows = new Map<string, Record<PanelField, HTMLInputElement>>();
  const tickSpans = new Map<string, HTMLSpanElement>();

  function buildRow(name: string): void {
    const row = document.createElement("div");
    row.className = "agent-row";
    const title = document.createElement("span");
    title.className = "agent-name";
    title.textContent = name;
    row.appendChild(title);

    const enabled = document.createElement("input");
    enabled.type = "checkbox";
    enabled.title = "work / pause";
    enabled.addEventListener("change", () => panel.edit(name, "enabled", enabled.checked));
    row.appendChild(enabled);

    const rate = document.createElement("input");
    rate.type = "number";
    rate.step = "1";
    rate.min = "1";
    rate.title = "activation rate (ticks)";
    rate.addEventListener("change", () => {
      const value = parseInt(rate.value, 10);
      if (Number.isFinite(value)) panel.edit(name, "rate", value);
    });
    row.appendChild(rate);

    const slider = (field: PanelField, max: string, title_: string): HTMLInputElement => {
      const wrap = document.createElement("span");
      wrap.className = "slider";
      const input = document.createElement("input");
      input.type = "range";
      input.min = "0.001";
      input.max = max;
      input.step = "0.001";
      input.title = title_;
      input.addEventListener("change", () => {
        const value = parseFloat(input.value);
        if (Number.isFinite(value)) panel.edit(name, field, value);
      });
      const readout = document.createElement("small");
      readout.className = "readout";
      wrap.appendChild(input);
      wrap.appendChild(readout);
      row.appendChild(wrap);
      return input;
    };
    const dPos = slider("d_pos", "0.2", "position step bound (m)");
    const dOr = slider("d_or", "0.6", "orientation step bound (rad)");

    const tick = document.createElement("span");
    tick.className = "effective-tick";
    row.appendChild(tick);
    tickSpans.set(name, tick);

    rows.set(name, { enabled, rate, d_pos: dPos, d_or: dOr });
    rosterDiv.appendChild(row);
  }

  function refreshPanel(): void {
    for (const name of panel.agentNames()) {
      if (!rows.has(name)) buildRow(name);
      const shown = panel.displayed(name);
      const inputs = rows.get(name)!;
      if (!shown) continue;
      if (document.activeElement !== inputs.enabled) inputs.enabled.checked = shown.enabled;
      const fields: Array<[PanelField, number]> = [
        ["rate", shown.rate],
        ["d_pos", shown.d_pos],
        ["d_or", shown.d_or],
      ];
      for (const [field, value] of fields) {
        const input = inputs[field];
        if (document.activeElement !== input) input.value = String(value);
        input.classList.toggle("pending", panel.isPending(name, field));
        if (input.type === "range" && input.nextElementSibling) {
          input.nextElementSibling.textContent = value.toFixed(3);
        }
      }
      inputs.enabled.classList.toggle("pending", panel.isPending(name, "enabled"));
      const tick = panel.effectiveTicks.get(name);
      tickSpans.get(name)!.textContent = tick === undefined ? "" : `@${tick}`;
    }
    toastsDiv.textContent = "";
    for (const toast of panel.toasts.slice(-4)) {
      const div = document.createElement("div");
      div.className = "toast";
      div.textContent = toast.message;
      toastsDiv.appendChild(div);
    }
  }

  // -- key legend ----------------------------------------------------------

  const legend = document.getElementById("legend") as HTMLDivElement;
  for (const [keys, meaning] of keyLegend()) {
    const div = document.createElement("div");
    div.textContent = `${keys}: ${meaning}`;
    legend.appendChild(div);
  }

  window.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    const key = moveKeyFor(event.code);
    if (key) {
      emitter.press(key);
      event.preventDefault();
    }
  });
  window.addEventListener("keyup", (event) => {
    const key = moveKeyFor(event.code);
    if (key) emitter.release(key);
  });
  window.addEventListener("blur", () => emitter.releaseAll());

  setInterval(() => emitter.tick(performance.now()), emitter.periodMs);

  function frame(): void {
    renderer.draw(view, performance.now());
    statusSpan.textContent = view.connection + (view.isStale(performance.now()) ? " (stale)" : "");
    statusSpan.className = view.connection === "open" ? "status-open" : "status-closed";
    requestAnimationFrame(frame);
  }

  connect();
  requestAnimationFrame(frame);
}

main();
