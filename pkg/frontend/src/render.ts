// Top-down scene renderer.
//
// Draws straight from the session view: obstacles and target from the
// hello/snapshot frames, manikin footprint with heading, robot links,
// the sight segment colored by its occlusion, and the vision cone as a
// wedge at the current aperture.  When snapshots stop arriving the last
// frame stays up under a stale badge; nothing is extrapolated.

import type { ConeData, SnapshotFrame, TargetData } from "./protocol.js";
import type { SessionView } from "./session.js";

/** The 2D-context subset the renderer touches, so tests can fake it. */
export interface CanvasLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  textAlign: CanvasTextAlign;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  setLineDash(segments: number[]): void;
}

export const COLORS = {
  background: "#10141a",
  obstacle: "#3a4454",
  target: "#e8b13c",
  footprint: "#5aa2e0",
  heading: "#dce6f2",
  robot: "#9a7fe0",
  sightClear: "#3fa45c",
  sightOccluded: "#d64545",
  cone: "#3fa45c",
  text: "#c7d0dc",
  stale: "#d64545",
  dial: "#6b7686",
};

export interface Viewport {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Fit a world bounding box into a pixel rectangle, y up. */
export function fitViewport(
  bounds: { minX: number; maxX: number; minY: number; maxY: number },
  width: number,
  height: number,
  margin = 20,
): Viewport {
  const spanX = Math.max(bounds.maxX - bounds.minX, 1e-6);
  const spanY = Math.max(bounds.maxY - bounds.minY, 1e-6);
  const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanY);
  const cx = (bounds.minX + bounds.maxX) / 2;
  const cy = (bounds.minY + bounds.maxY) / 2;
  return { scale, offsetX: width / 2 - cx * scale, offsetY: height / 2 + cy * scale };
}

export function worldToScreen(vp: Viewport, x: number, y: number): [number, number] {
  return [vp.offsetX + x * vp.scale, vp.offsetY - y * vp.scale];
}

export interface Wedge {
  x: number;
  y: number;
  angle: number;
  halfAngle: number;
  radius: number;
}

/** Project the cone onto the floor plane as a wedge toward the target. */
export function coneWedge(cone: ConeData, target: TargetData): Wedge {
  const dx = target.position[0] - cone.vertex[0];
  const dy = target.position[1] - cone.vertex[1];
  return {
    x: cone.vertex[0],
    y: cone.vertex[1],
    angle: Math.atan2(cone.axis[1], cone.axis[0]),
    halfAngle: cone.aperture,
    radius: Math.max(Math.hypot(dx, dy), 0.2),
  };
}

const PLOT_LANE_PX = 42;

export class Renderer {
  constructor(
    private readonly ctx: CanvasLike,
    private readonly width: number,
    private readonly height: number,
  ) {}

  draw(view: SessionView, now: number): void {
    const ctx = this.ctx;
    ctx.globalAlpha = 1;
    ctx.setLineDash([]);
    ctx.fillStyle = COLORS.background;
    ctx.fillRect(0, 0, this.width, this.height);
    if (!view.snapshot) {
      ctx.fillStyle = COLORS.text;
      ctx.font = "16px sans-serif";
      ctx.textAlign = "center";
      ctx.fillText("waiting for snapshot", this.width / 2, this.height / 2);
      return;
    }
    const snap = view.snapshot;
    const vp = fitViewport(this.sceneBounds(view), this.width, this.height - this.plotHeight(view));
    this.drawScene(vp, view, snap);
    this.drawDials(snap);
    this.drawPlots(view);
    this.drawStatus(view, snap, now);
  }

  private plotHeight(view: SessionView): number {
    return Object.keys(view.plots).length * PLOT_LANE_PX + 8;
  }

  private sceneBounds(view: SessionView) {
    const bounds = { minX: -1, maxX: 1, minY: -1, maxY: 1 };
    const grow = (x: number, y: number) => {
      bounds.minX = Math.min(bounds.minX, x);
      bounds.maxX = Math.max(bounds.maxX, x);
      bounds.minY = Math.min(bounds.minY, y);
      bounds.maxY = Math.max(bounds.maxY, y);
    };
    if (view.hello) {
      for (const poly of view.hello.scene.polygons) for (const [x, y] of poly) grow(x, y);
      for (const box of view.hello.scene.boxes) {
        grow(box.center[0] - box.half_extents[0], box.center[1] - box.half_extents[1]);
        grow(box.center[0] + box.half_extents[0], box.center[1] + box.half_extents[1]);
      }
    }
    const snap = view.snapshot;
    if (snap) {
      grow(snap.target.position[0], snap.target.position[1]);
      for (const [x, y] of snap.manikin.footprint) grow(x, y);
    }
    const pad = 0.4;
    return {
      minX: bounds.minX - pad,
      maxX: bounds.maxX + pad,
      minY: bounds.minY - pad,
      maxY: bounds.maxY + pad,
    };
  }

  private polygon(vp: Viewport, points: ArrayLike<number>[]): void {
    const ctx = this.ctx;
    ctx.beginPath();
    points.forEach((p, i) => {
      const [sx, sy] = worldToScreen(vp, (p as number[])[0], (p as number[])[1]);
      if (i === 0) ctx.moveTo(sx, sy);
      else ctx.lineTo(sx, sy);
    });
    ctx.closePath();
  }

  private drawScene(vp: Viewport, view: SessionView, snap: SnapshotFrame): void {
    const ctx = this.ctx;
    if (view.hello) {
      ctx.fillStyle = COLORS.obstacle;
      for (const poly of view.hello.scene.polygons) {
        this.polygon(vp, poly);
        ctx.fill();
      }
      for (const box of view.hello.scene.boxes) {
        const [sx, sy] = worldToScreen(
          vp,
          box.center[0] - box.half_extents[0],
          box.center[1] + box.half_extents[1],
        );
        ctx.fillRect(sx, sy, 2 * box.half_extents[0] * vp.scale, 2 * box.half_extents[1] * vp.scale);
      }
    }

    // Target disc.
    const [tx, ty] = worldToScreen(vp, snap.target.position[0], snap.target.position[1]);
    ctx.fillStyle = COLORS.target;
    ctx.beginPath();
    ctx.arc(tx, ty, Math.max(snap.target.size * vp.scale, 3), 0, 2 * Math.PI);
    ctx.fill();

    // Vision cone wedge, then the sight segment on top.
    const wedge = coneWedge(snap.cone, snap.target);
    const [wx, wy] = worldToScreen(vp, wedge.x, wedge.y);
    ctx.globalAlpha = 0.18;
    ctx.fillStyle = COLORS.cone;
    ctx.beginPath();
    ctx.moveTo(wx, wy);
    // Screen y is flipped, so world angles negate.
    ctx.arc(wx, wy, wedge.radius * vp.scale, -(wedge.angle - wedge.halfAngle), -(wedge.angle + wedge.halfAngle));
    ctx.closePath();
    ctx.fill();
    ctx.globalAlpha = 1;

    const sightColor = snap.criteria.st_occlusion > 0 ? COLORS.sightOccluded : COLORS.sightClear;
    ctx.strokeStyle = sightColor;
    ctx.lineWidth = 2;
    ctx.setLineDash(snap.criteria.st_occlusion > 0 ? [6, 4] : []);
    ctx.beginPath();
    const [ex, ey] = worldToScreen(vp, snap.cone.vertex[0], snap.cone.vertex[1]);
    ctx.moveTo(ex, ey);
    ctx.lineTo(tx, ty);
    ctx.stroke();
    ctx.setLineDash([]);

    // Manikin footprint and trunk heading.
    ctx.fillStyle = COLORS.footprint;
    ctx.globalAlpha = 0.8;
    this.polygon(vp, snap.manikin.footprint);
    ctx.fill();
    ctx.globalAlpha = 1;
    const [mx, my] = worldToScreen(vp, snap.manikin.trunk[0], snap.manikin.trunk[1]);
    const theta = snap.manikin.trunk[2];
    ctx.strokeStyle = COLORS.heading;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(mx, my);
    ctx.lineTo(mx + 18 * Math.cos(theta), my - 18 * Math.sin(theta));
    ctx.stroke();

    // Robot arm links.
    if (snap.robot) {
      ctx.strokeStyle = COLORS.robot;
      ctx.lineWidth = 3;
      ctx.beginPath();
      snap.robot.joint_points.forEach((p, i) => {
        const [sx, sy] = worldToScreen(vp, p[0], p[1]);
        if (i === 0) ctx.moveTo(sx, sy);
        else ctx.lineTo(sx, sy);
      });
      ctx.stroke();
    }
  }

  private drawDials(snap: SnapshotFrame): void {
    const ctx = this.ctx;
    const labels = ["alpha", "beta", "theta_b"];
    const radius = 14;
    for (let i = 0; i < 3; i += 1) {
      const cx = 30 + i * 70;
      const cy = 34;
      const value = snap.manikin.q_b[i];
      ctx.strokeStyle = COLORS.dial;
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      ctx.arc(cx, cy, radius, 0, 2 * Math.PI);
      ctx.stroke();
      ctx.strokeStyle = COLORS.heading;
      ctx.beginPath();
      ctx.moveTo(cx, cy);
      // Dial zero points up; positive angles sweep counter-clockwise.
      ctx.lineTo(cx + radius * Math.sin(-value), cy - radius * Math.cos(value));
      ctx.stroke();
      ctx.fillStyle = COLORS.text;
      ctx.font = "10px sans-serif";
      ctx.textAlign = "center";
      ctx.fillText(`${labels[i]} ${value.toFixed(2)}`, cx, cy + radius + 12);
    }
  }

  private drawPlots(view: SessionView): void {
    const ctx = this.ctx;
    const names = Object.keys(view.plots);
    const top = this.height - this.plotHeight(view);
    names.forEach((name, lane) => {
      const buffer = view.plots[name];
      const y0 = top + lane * PLOT_LANE_PX + 6;
      const h = PLOT_LANE_PX - 12;
      ctx.strokeStyle = COLORS.dial;
      ctx.lineWidth = 1;
      ctx.strokeRect(8, y0, this.width - 16, h);
      const values = buffer.values();
      if (values.length > 1) {
        const top_v = Math.max(buffer.max(), 1e-9);
        ctx.strokeStyle = COLORS.footprint;
        ctx.beginPath();
        values.forEach((v, i) => {
          const px = 8 + (i / (buffer.capacity - 1)) * (this.width - 16);
          const py = y0 + h - (v / top_v) * h;
          if (i === 0) ctx.moveTo(px, py);
          else ctx.lineTo(px, py);
        });
        ctx.stroke();
      }
      ctx.fillStyle = COLORS.text;
      ctx.font = "10px sans-serif";
      ctx.textAlign = "left";
      const last = buffer.last();
      ctx.fillText(`${name}: ${last === undefined ? "-" : last.toFixed(4)}`, 12, y0 + 10);
    });
  }

  private drawStatus(view: SessionView, snap: SnapshotFrame, now: number): void {
    const ctx = this.ctx;
    ctx.fillStyle = COLORS.text;
    ctx.font = "12px sans-serif";
    ctx.textAlign = "left";
    ctx.fillText(`tick ${snap.tick}  t=${snap.time.toFixed(2)}s`, 10, this.height - 6);
    const failures = Object.entries(snap.failures);
    if (failures.length > 0) {
      ctx.fillStyle = COLORS.sightOccluded;
      ctx.fillText(`failures: ${failures.map(([k, v]) => `${k}: ${v}`).join(", ")}`, 10, this.height - 22);
    }
    if (snap.dropped_inputs > 0) {
      ctx.fillStyle = COLORS.target;
      ctx.textAlign = "right";
      ctx.fillText(`dropped inputs: ${snap.dropped_inputs}`, this.width - 10, this.height - 6);
    }
    if (view.isStale(now)) {
      ctx.fillStyle = COLORS.stale;
      ctx.fillRect(this.width - 76, 8, 68, 22);
      ctx.fillStyle = "#ffffff";
      ctx.textAlign = "center";
      ctx.font = "12px sans-serif";
      ctx.fillText("STALE", this.width - 42, 23);
    }
  }
}
