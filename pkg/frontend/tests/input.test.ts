import { describe, expect, it } from "vitest";

import { InputEmitter, moveKeyFor, type OperatorSample } from "../src/input.js";

function harness(options: ConstructorParameters<typeof InputEmitter>[1] = {}) {
  const sent: OperatorSample[] = [];
  const emitter = new InputEmitter((s) => sent.push(s), options);
  return { sent, emitter };
}

/** Advance the emit timer across a span, calling tick once per period. */
function hold(emitter: InputEmitter, from: number, spanMs: number): number {
  let now = from;
  const until = from + spanMs;
  while (now + emitter.periodMs <= until) {
    now += emitter.periodMs;
    emitter.tick(now);
  }
  return now;
}

describe("moveKeyFor", () => {
  it("maps wasd and arrows, ignores the rest", () => {
    expect(moveKeyFor("KeyW")).toBe("forward");
    expect(moveKeyFor("ArrowDown")).toBe("back");
    expect(moveKeyFor("KeyQ")).toBe("turnLeft");
    expect(moveKeyFor("KeyZ")).toBeNull();
  });
});

describe("InputEmitter", () => {
  it("emits one forward sample per period while held", () => {
    const { sent, emitter } = harness();
    emitter.setConnected(true, 0);
    emitter.press("forward");
    hold(emitter, 0, 1000);
    expect(sent.length).toBe(20);
    for (const s of sent) {
      expect(s.dy).toBeGreaterThan(0);
      expect(s.dx).toBe(0);
      expect(s.dtheta).toBe(0);
    }
    // Client timestamps in seconds, strictly increasing.
    expect(sent[0].timestamp).toBeCloseTo(0.05);
    expect(sent.at(-1)!.timestamp).toBeCloseTo(1.0);
  });

  it("emits nothing when no key is down", () => {
    const { sent, emitter } = harness();
    emitter.setConnected(true, 0);
    hold(emitter, 0, 1000);
    expect(sent.length).toBe(0);
  });

  it("turn left is a positive dtheta", () => {
    const { sent, emitter } = harness();
    emitter.setConnected(true, 0);
    emitter.press("turnLeft");
    emitter.tick(50);
    expect(sent[0].dtheta).toBeGreaterThan(0);
    emitter.release("turnLeft");
    emitter.press("turnRight");
    emitter.tick(100);
    expect(sent[1].dtheta).toBeLessThan(0);
  });

  it("opposed keys cancel", () => {
    const { sent, emitter } = harness();
    emitter.setConnected(true, 0);
    emitter.press("forward");
    emitter.press("back");
    emitter.tick(50);
    expect(sent[0].dy).toBe(0);
  });

  it("buffers at most one second while disconnected", () => {
    const drops: number[] = [];
    const { sent, emitter } = harness({ onDrop: (n) => drops.push(n) });
    emitter.setConnected(false, 0);
    emitter.press("forward");
    hold(emitter, 0, 1500);
    expect(sent.length).toBe(0);
    expect(emitter.bufferedCount()).toBeLessThanOrEqual(20);
    expect(drops.reduce((a, b) => a + b, 0)).toBeGreaterThan(0);
  });

  it("flushes the buffered tail on reconnect", () => {
    const { sent, emitter } = harness();
    emitter.setConnected(false, 0);
    emitter.press("forward");
    const now = hold(emitter, 0, 400);
    emitter.release("forward");
    emitter.setConnected(true, now);
    expect(sent.length).toBe(8);
    expect(emitter.bufferedCount()).toBe(0);
    // No replays after the flush.
    emitter.tick(now + 50);
    expect(sent.length).toBe(8);
  });
});
