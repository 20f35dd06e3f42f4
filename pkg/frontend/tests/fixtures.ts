import type { AgentState, HelloFrame, SnapshotFrame } from "../src/protocol.js";

export function makeAgents(): AgentState[] {
  return [
    { name: "attraction", enabled: true, rate: 3, d_pos: 0.02, d_or: 0.05 },
    { name: "operator", enabled: true, rate: 9, d_pos: 0.02, d_or: 0.05 },
  ];
}

export function makeHello(overrides: Partial<HelloFrame> = {}): HelloFrame {
  return {
    type: "hello",
    version: 1,
    scenario: "trap",
    tick: 0,
    tick_rate: 100,
    agents: makeAgents(),
    scene: {
      polygons: [
        [
          [-1, 0.4],
          [1, 0.4],
          [1, 0.6],
          [-1, 0.6],
        ],
      ],
      boxes: [{ center: [0, 0, 0.3], half_extents: [0.05, 0.4, 0.05] }],
    },
    target: { position: [0.6, 0.1, 0.35], size: 0.1 },
    ...overrides,
  };
}

export function makeSnapshot(overrides: Partial<SnapshotFrame> = {}): SnapshotFrame {
  return {
    type: "snapshot",
    version: 1,
    tick: 1,
    time: 0.01,
    agents: makeAgents(),
    manikin: {
      trunk: [-0.6, 0.0, 0.0],
      q_b: [0.0, 0.1, -0.05],
      footprint: [
        [-0.75, -0.2],
        [-0.45, -0.2],
        [-0.45, 0.2],
        [-0.75, 0.2],
      ],
    },
    cone: {
      vertex: [-0.55, 0.0, 1.5],
      axis: [0.7, 0.1, -0.7071],
      aperture: 0.18,
      eps_min: 0.0349,
      eps_max: 0.5236,
    },
    target: { position: [0.6, 0.1, 0.35], size: 0.1 },
    criteria: { collision_length: 0.0, st_occlusion: 0.0, cone_occlusion: 0.0, distance: 1.2 },
    failures: {},
    dropped_inputs: 0,
    energies: {},
    ...overrides,
  };
}
