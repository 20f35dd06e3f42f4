// Roster control panel.
//
// Each edit is optimism-free: the control shows the pending value with
// a badge until the ack arrives naming the tick it takes effect on.
// A rejection clears the edit, so the control falls back to the
// server's roster value, and the message lands in the toast list.

import type { AckFrame, AgentState, Command, ErrorFrame } from "./protocol.js";

export type PanelField = "enabled" | "rate" | "d_pos" | "d_or";

export interface PanelEdit {
  id: number;
  agent: string;
  field: PanelField;
  value: number | boolean;
}

export interface Toast {
  message: string;
  at: number;
}

const TOAST_LIMIT = 6;

export class PanelModel {
  private readonly roster = new Map<string, AgentState>();
  private readonly edits = new Map<number, PanelEdit>();
  /** Last acknowledged effective tick per agent. */
  readonly effectiveTicks = new Map<string, number>();
  readonly toasts: Toast[] = [];

  constructor(
    private readonly emit: (cmd: Command, id: number) => void,
    private readonly nextId: () => number,
  ) {}

  /** Refresh the applied values from the latest server roster. */
  syncRoster(agents: AgentState[]): void {
    for (const agent of agents) this.roster.set(agent.name, { ...agent });
  }

  agentNames(): string[] {
    return [...this.roster.keys()];
  }

  /** Roster value overlaid with any pending edits for that agent. */
  displayed(name: string): AgentState | null {
    const applied = this.roster.get(name);
    if (!applied) return null;
    const shown = { ...applied };
    for (const edit of this.edits.values()) {
      if (edit.agent !== name) continue;
      if (edit.field === "enabled") shown.enabled = edit.value as boolean;
      else shown[edit.field] = edit.value as number;
    }
    return shown;
  }

  isPending(name: string, field: PanelField): boolean {
    for (const edit of this.edits.values()) {
      if (edit.agent === name && edit.field === field) return true;
    }
    return false;
  }

  pendingCount(): number {
    return this.edits.size;
  }

  /** Send one field change; returns the command id. */
  edit(agent: string, field: PanelField, value: number | boolean): number {
    const id = this.nextId();
    let cmd: Command;
    if (field === "enabled") {
      cmd = { action: "set-enabled", agent, enabled: value as boolean };
    } else if (field === "rate") {
      cmd = { action: "set-rate", agent, rate: value as number };
    } else if (field === "d_pos") {
      cmd = { action: "set-delta", agent, d_pos: value as number };
    } else {
      cmd = { action: "set-delta", agent, d_or: value as number };
    }
    this.edits.set(id, { id, agent, field, value });
    this.emit(cmd, id);
    return id;
  }

  onAck(frame: AckFrame): void {
    if (frame.id === undefined) return;
    const edit = this.edits.get(frame.id);
    if (!edit) return;
    this.edits.delete(frame.id);
    this.effectiveTicks.set(edit.agent, frame.effective_tick);
    // The ack confirms the new value server-side; fold it into the
    // roster so the control holds steady until the next snapshot.
    const applied = this.roster.get(edit.agent);
    if (applied) {
      if (edit.field === "enabled") applied.enabled = edit.value as boolean;
      else applied[edit.field] = edit.value as number;
    }
  }

  onError(frame: ErrorFrame): void {
    if (frame.id !== undefined && this.edits.has(frame.id)) {
      const edit = this.edits.get(frame.id)!;
      this.edits.delete(frame.id);
      this.pushToast(`${edit.agent}.${edit.field} rejected: ${frame.message}`);
      return;
    }
    this.pushToast(frame.message);
  }

  private pushToast(message: string): void {
    this.toasts.push({ message, at: Date.now() });
    if (this.toasts.length > TOAST_LIMIT) this.toasts.shift();
  }
}
