// Wire types for the console service protocol, version 1.
//
// The server speaks JSON text frames over a WebSocket: a hello on
// connect, then one snapshot per tick, plus an ack or error in reply
// to each command.  Everything here mirrors the documented frame
// shapes; parseServerFrame is the single entry point that turns raw
// text into a typed frame or null.

export const PROTOCOL_VERSION = 1;

export interface AgentState {
  name: string;
  enabled: boolean;
  rate: number;
  d_pos: number;
  d_or: number;
}

export interface SceneBox {
  center: number[];
  half_extents: number[];
}

export interface SceneData {
  polygons: number[][][];
  boxes: SceneBox[];
}

export interface TargetData {
  position: number[];
  size: number;
}

export interface ManikinData {
  trunk: number[];
  q_b: number[];
  footprint: number[][];
}

export interface ConeData {
  vertex: number[];
  axis: number[];
  aperture: number;
  eps_min: number;
  eps_max: number;
}

export interface RobotData {
  q: number[];
  joint_points: number[][];
}

export interface CriteriaData {
  collision_length: number;
  st_occlusion: number;
  cone_occlusion: number;
  distance: number;
}

export interface HelloFrame {
  type: "hello";
  version: number;
  scenario: string;
  tick: number;
  tick_rate: number;
  agents: AgentState[];
  scene: SceneData;
  target: TargetData;
}

export interface SnapshotFrame {
  type: "snapshot";
  version: number;
  tick: number;
  time: number;
  agents: AgentState[];
  manikin: ManikinData;
  cone: ConeData;
  robot?: RobotData;
  target: TargetData;
  criteria: CriteriaData;
  failures: Record<string, string>;
  dropped_inputs: number;
  energies: Record<string, number>;
}

export interface AckFrame {
  type: "ack";
  version: number;
  id?: number;
  action: string;
  agent?: string;
  effective_tick: number;
}

export interface ErrorFrame {
  type: "error";
  version: number;
  id?: number;
  message: string;
}

export type ServerFrame = HelloFrame | SnapshotFrame | AckFrame | ErrorFrame;

export type Command =
  | { action: "set-enabled"; agent: string; enabled: boolean }
  | { action: "set-rate"; agent: string; rate: number }
  | { action: "set-delta"; agent: string; d_pos?: number; d_or?: number }
  | { action: "operator-input"; dx: number; dy: number; dtheta: number; timestamp: number }
  | { action: "set-target"; position: number[]; size?: number };

/** Serialize a command with its correlation id. */
export function commandFrame(cmd: Command, id: number): string {
  return JSON.stringify({ type: "command", id, ...cmd });
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

/**
 * Parse one server frame.  Returns null for anything that is not a
 * well-formed frame of a known type; the caller decides whether that
 * is worth surfacing.
 */
export function parseServerFrame(raw: string): ServerFrame | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (!isRecord(data)) return null;
  switch (data.type) {
    case "hello":
      if (typeof data.scenario !== "string") return null;
      if (typeof data.tick !== "number") return null;
      if (!Array.isArray(data.agents)) return null;
      return data as unknown as HelloFrame;
    case "snapshot":
      if (typeof data.tick !== "number") return null;
      if (typeof data.time !== "number") return null;
      if (!Array.isArray(data.agents)) return null;
      return data as unknown as SnapshotFrame;
    case "ack":
      if (typeof data.action !== "string") return null;
      if (typeof data.effective_tick !== "number") return null;
      return data as unknown as AckFrame;
    case "error":
      if (typeof data.message !== "string") return null;
      return data as unknown as ErrorFrame;
    default:
      return null;
  }
}
