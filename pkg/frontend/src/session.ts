// Client-side session state.
//
// Everything the console displays comes out of this object, and this
// object is only ever written by server frames: a snapshot, an ack, or
// an error.  The client never extrapolates between ticks and never
// invents a value the server did not send.

import type {
  AckFrame,
  AgentState,
  ErrorFrame,
  HelloFrame,
  ServerFrame,
  SnapshotFrame,
} from "./protocol.js";

/** Bounded FIFO of samples for one strip chart. */
export class PlotBuffer {
  readonly capacity: number;
  private samples: number[] = [];

  constructor(capacity: number) {
    if (!Number.isInteger(capacity) || capacity < 1) {
      throw new RangeError("capacity must be a positive integer");
    }
    this.capacity = capacity;
  }

  push(value: number): void {
    this.samples.push(value);
    if (this.samples.length > this.capacity) this.samples.shift();
  }

  get length(): number {
    return this.samples.length;
  }

  values(): readonly number[] {
    return this.samples;
  }

  last(): number | undefined {
    return this.samples[this.samples.length - 1];
  }

  max(): number {
    let top = 0;
    for (const v of this.samples) if (v > top) top = v;
    return top;
  }
}

export type ConnectionState = "connecting" | "open" | "closed";

export interface PendingCommand {
  id: number;
  action: string;
  agent?: string;
  sentAt: number;
}

export interface AckRecord {
  id?: number;
  action: string;
  agent?: string;
  effectiveTick: number;
}

export interface Rejection {
  id?: number;
  message: string;
}

export const PLOT_CAPACITY = 600;
export const STALE_AFTER_MS = 1000;
const HISTORY_LIMIT = 200;

export class SessionView {
  connection: ConnectionState = "connecting";
  hello: HelloFrame | null = null;
  snapshot: SnapshotFrame | null = null;
  /** Wall-clock time of the last accepted snapshot, from the caller's clock. */
  lastSnapshotAt = Number.NEGATIVE_INFINITY;
  /** Snapshots ignored because their tick did not advance. */
  staleFrames = 0;

  readonly pending = new Map<number, PendingCommand>();
  readonly acks: AckRecord[] = [];
  readonly rejections: Rejection[] = [];

  readonly plots: Record<string, PlotBuffer> = {
    collision: new PlotBuffer(PLOT_CAPACITY),
    occlusion: new PlotBuffer(PLOT_CAPACITY),
    distance: new PlotBuffer(PLOT_CAPACITY),
  };

  private nextId = 1;

  /** Allocate a correlation id for an outbound command. */
  issueId(): number {
    return this.nextId++;
  }

  /** Register an outbound command so its ack or error can be paired up. */
  track(id: number, action: string, agent: string | undefined, sentAt: number): void {
    this.pending.set(id, { id, action, agent, sentAt });
  }

  /** Latest roster the server reported. */
  agents(): AgentState[] {
    if (this.snapshot) return this.snapshot.agents;
    if (this.hello) return this.hello.agents;
    return [];
  }

  /** True once the last snapshot is older than the freshness window. */
  isStale(now: number): boolean {
    return this.snapshot !== null && now - this.lastSnapshotAt > STALE_AFTER_MS;
  }

  handleFrame(frame: ServerFrame, now: number): void {
    switch (frame.type) {
      case "hello":
        this.hello = frame;
        break;
      case "snapshot":
        this.acceptSnapshot(frame, now);
        break;
      case "ack":
        if (frame.id !== undefined) this.pending.delete(frame.id);
        this.acks.push({
          id: frame.id,
          action: frame.action,
          agent: frame.agent,
          effectiveTick: frame.effective_tick,
        });
        if (this.acks.length > HISTORY_LIMIT) this.acks.shift();
        break;
      case "error":
        if (frame.id !== undefined) this.pending.delete(frame.id);
        this.rejections.push({ id: frame.id, message: frame.message });
        if (this.rejections.length > HISTORY_LIMIT) this.rejections.shift();
        break;
    }
  }

  private acceptSnapshot(frame: SnapshotFrame, now: number): void {
    // The displayed tick must be monotone; drop reordered frames.
    if (this.snapshot !== null && frame.tick <= this.snapshot.tick) {
      this.staleFrames += 1;
      return;
    }
    this.snapshot = frame;
    this.lastSnapshotAt = now;
    this.plots.collision.push(frame.criteria.collision_length);
    this.plots.occlusion.push(frame.criteria.st_occlusion + frame.criteria.cone_occlusion);
    this.plots.distance.push(frame.criteria.distance);
    for (const [name, value] of Object.entries(frame.energies)) {
      let buffer = this.plots[`energy:${name}`];
      if (!buffer) {
        buffer = new PlotBuffer(PLOT_CAPACITY);
        this.plots[`energy:${name}`] = buffer;
      }
      buffer.push(value);
    }
  }
}
