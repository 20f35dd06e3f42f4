import { beforeEach, describe, expect, it } from "vitest";

import { PanelModel } from "../src/panel.js";
import type { Command } from "../src/protocol.js";
import { makeAgents } from "./fixtures.js";

let sent: Array<{ cmd: Command; id: number }>;
let panel: PanelModel;

beforeEach(() => {
  sent = [];
  let next = 1;
  panel = new PanelModel((cmd, id) => sent.push({ cmd, id }), () => next++);
  panel.syncRoster(makeAgents());
});

describe("PanelModel", () => {
  it("builds the right command per field", () => {
    panel.edit("operator", "enabled", false);
    panel.edit("operator", "rate", 1);
    panel.edit("operator", "d_pos", 0.03);
    panel.edit("operator", "d_or", 0.08);
    expect(sent.map((s) => s.cmd)).toEqual([
      { action: "set-enabled", agent: "operator", enabled: false },
      { action: "set-rate", agent: "operator", rate: 1 },
      { action: "set-delta", agent: "operator", d_pos: 0.03 },
      { action: "set-delta", agent: "operator", d_or: 0.08 },
    ]);
  });

  it("shows the pending value until the ack lands", () => {
    const id = panel.edit("operator", "rate", 1);
    expect(panel.isPending("operator", "rate")).toBe(true);
    expect(panel.displayed("operator")?.rate).toBe(1);

    panel.onAck({ type: "ack", version: 1, id, action: "set-rate", agent: "operator", effective_tick: 18 });
    expect(panel.isPending("operator", "rate")).toBe(false);
    expect(panel.displayed("operator")?.rate).toBe(1);
    expect(panel.effectiveTicks.get("operator")).toBe(18);
  });

  it("reverts to the roster value when the server rejects rate zero", () => {
    const id = panel.edit("operator", "rate", 0);
    expect(panel.displayed("operator")?.rate).toBe(0);

    panel.onError({ type: "error", version: 1, id, message: "rate must be a positive integer" });
    expect(panel.isPending("operator", "rate")).toBe(false);
    expect(panel.displayed("operator")?.rate).toBe(9);
    expect(panel.toasts.at(-1)?.message).toContain("rate must be a positive integer");
  });

  it("surfaces unaddressed errors as toasts too", () => {
    panel.onError({ type: "error", version: 1, message: "engine stopped" });
    expect(panel.toasts.at(-1)?.message).toBe("engine stopped");
  });

  it("later roster syncs win once nothing is pending", () => {
    const agents = makeAgents().map((a) => (a.name === "operator" ? { ...a, d_pos: 0.05 } : a));
    panel.syncRoster(agents);
    expect(panel.displayed("operator")?.d_pos).toBe(0.05);
  });

  it("pending edit overlays a fresh roster sync", () => {
    panel.edit("operator", "d_pos", 0.04);
    panel.syncRoster(makeAgents());
    expect(panel.displayed("operator")?.d_pos).toBe(0.04);
  });
});
