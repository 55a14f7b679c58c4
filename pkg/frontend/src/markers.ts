/** Marker drawing on a 2D canvas context: red handles, blue targets,
 *  connecting arrows. Kept separate from state so tests stay DOM-free. */

import type { WirePair } from "./api.js";
import type { CanvasGeometry } from "./geometry.js";
import { imageToCanvas } from "./geometry.js";
import type { PendingState } from "./state.js";

export const HANDLE_COLOR = "#e5484d";
export const TARGET_COLOR = "#3e63dd";

type Ctx = CanvasRenderingContext2D;

function dot(ctx: Ctx, x: number, y: number, color: string): void {
  ctx.beginPath();
  ctx.arc(x, y, 5, 0, 2 * Math.PI);
  ctx.fillStyle = color;
  ctx.fill();
  ctx.lineWidth = 1.5;
  ctx.strokeStyle = "#ffffff";
  ctx.stroke();
}

function arrow(ctx: Ctx, x0: number, y0: number, x1: number, y1: number): void {
  ctx.beginPath();
  ctx.moveTo(x0, y0);
  ctx.lineTo(x1, y1);
  ctx.strokeStyle = "#ffffffcc";
  ctx.lineWidth = 2;
  ctx.stroke();
  const angle = Math.atan2(y1 - y0, x1 - x0);
  ctx.beginPath();
  ctx.moveTo(x1, y1);
  ctx.lineTo(x1 - 9 * Math.cos(angle - 0.4), y1 - 9 * Math.sin(angle - 0.4));
  ctx.lineTo(x1 - 9 * Math.cos(angle + 0.4), y1 - 9 * Math.sin(angle + 0.4));
  ctx.closePath();
  ctx.fillStyle = "#ffffffcc";
  ctx.fill();
}

export function drawMarkers(
  ctx: Ctx,
  geo: CanvasGeometry,
  pairs: WirePair[],
  pending: PendingState,
): void {
  for (const pair of pairs) {
    const h = imageToCanvas(geo, pair.hx, pair.hy);
    const t = imageToCanvas(geo, pair.tx, pair.ty);
    arrow(ctx, h.x, h.y, t.x, t.y);
    dot(ctx, h.x, h.y, HANDLE_COLOR);
    dot(ctx, t.x, t.y, TARGET_COLOR);
  }
  if (pending.kind === "awaiting-target") {
    const h = imageToCanvas(geo, pending.handle.x, pending.handle.y);
    dot(ctx, h.x, h.y, HANDLE_COLOR);
  }
}
