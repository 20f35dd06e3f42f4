// Keyboard to operator-input mapping.
//
// While a movement key is held, one sample goes out every period; a
// sample is the displacement step for that period, not a velocity.
// dx and dy displace the trunk in the world frame (forward is +y,
// which is up on screen) and dtheta is counter-clockwise.  When the
// socket is down, samples queue for up to one second and anything
// older is dropped with a visible notice.

export type MoveKey = "forward" | "back" | "left" | "right" | "turnLeft" | "turnRight";

export interface OperatorSample {
  dx: number;
  dy: number;
  dtheta: number;
  /** Client wall-clock in seconds. */
  timestamp: number;
}

const KEY_CODES: Record<string, MoveKey> = {
  KeyW: "forward",
  ArrowUp: "forward",
  KeyS: "back",
  ArrowDown: "back",
  KeyA: "left",
  ArrowLeft: "left",
  KeyD: "right",
  ArrowRight: "right",
  KeyQ: "turnLeft",
  KeyE: "turnRight",
};

/** Map a KeyboardEvent.code to a movement, or null when unbound. */
export function moveKeyFor(code: string): MoveKey | null {
  return KEY_CODES[code] ?? null;
}

/** Rows for the on-screen key legend. */
export function keyLegend(): Array<[string, string]> {
  return [
    ["W / Up", "forward"],
    ["S / Down", "back"],
    ["A / Left", "strafe left"],
    ["D / Right", "strafe right"],
    ["Q", "turn left"],
    ["E", "turn right"],
  ];
}

export interface InputEmitterOptions {
  stepPos?: number;
  stepTheta?: number;
  bufferMs?: number;
  onDrop?: (count: number) => void;
}

export const EMIT_PERIOD_MS = 50;

export class InputEmitter {
  readonly periodMs = EMIT_PERIOD_MS;
  readonly stepPos: number;
  readonly stepTheta: number;
  readonly bufferMs: number;

  private readonly held = new Set<MoveKey>();
  private readonly buffered: Array<{ at: number; sample: OperatorSample }> = [];
  private connected = false;
  private readonly onDrop: (count: number) => void;

  constructor(
    private readonly send: (sample: OperatorSample) => void,
    options: InputEmitterOptions = {},
  ) {
    this.stepPos = options.stepPos ?? 0.01;
    this.stepTheta = options.stepTheta ?? 0.02;
    this.bufferMs = options.bufferMs ?? 1000;
    this.onDrop = options.onDrop ?? (() => {});
  }

  press(key: MoveKey): void {
    this.held.add(key);
  }

  release(key: MoveKey): void {
    this.held.delete(key);
  }

  releaseAll(): void {
    this.held.clear();
  }

  heldCount(): number {
    return this.held.size;
  }

  setConnected(connected: boolean, now: number): void {
    this.connected = connected;
    if (connected) {
      this.prune(now);
      for (const entry of this.buffered.splice(0)) this.send(entry.sample);
    }
  }

  /** Build the sample for this period, or null when no key is held. */
  sample(now: number): OperatorSample | null {
    if (this.held.size === 0) return null;
    let dx = 0;
    let dy = 0;
    let dtheta = 0;
    if (this.held.has("forward")) dy += this.stepPos;
    if (this.held.has("back")) dy -= this.stepPos;
    if (this.held.has("right")) dx += this.stepPos;
    if (this.held.has("left")) dx -= this.stepPos;
    if (this.held.has("turnLeft")) dtheta += this.stepTheta;
    if (this.held.has("turnRight")) dtheta -= this.stepTheta;
    return { dx, dy, dtheta, timestamp: now / 1000 };
  }

  /** Called once per emit period by the host timer. */
  tick(now: number): void {
    const sample = this.sample(now);
    if (sample === null) return;
    if (this.connected) {
      this.send(sample);
      return;
    }
    this.buffered.push({ at: now, sample });
    this.prune(now);
  }

  bufferedCount(): number {
    return this.buffered.length;
  }

  private prune(now: number): void {
    let dropped = 0;
    while (this.buffered.length > 0 && now - this.buffered[0].at >= this.bufferMs) {
      this.buffered.shift();
      dropped += 1;
    }
    if (dropped > 0) this.onDrop(dropped);
  }
}
