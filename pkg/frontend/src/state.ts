/** Session state: alternating handle/target clicks, undo, edit history.
 *
 * All coordinates here are image pixels. A pair is complete only when both
 * its handle and target have been placed; run() submits complete pairs only.
 */

import type { EditResponse, WirePair } from "./api.js";

export type Point = { x: number; y: number };

export type PendingState =
  | { kind: "awaiting-handle" }
  | { kind: "awaiting-target"; handle: Point };

export type HistoryEntry = {
  mddCurve: number[];
  wallTimeMs: number;
  stepCount: number;
};

export class UiSession {
  readonly sessionId: string;
  readonly seed: number;
  readonly resolution: number;
  imageBase64: string;
  pairs: WirePair[] = [];
  pending: PendingState = { kind: "awaiting-handle" };
  history: HistoryEntry[] = [];
  editInFlight = false;

  constructor(sessionId: string, seed: number, resolution: number, imageBase64: string) {
    this.sessionId = sessionId;
    this.seed = seed;
    this.resolution = resolution;
    this.imageBase64 = imageBase64;
  }

  /** Alternating clicks: first places a handle, second the matching target.
   *  Clicks outside the image are ignored. */
  placePoint(point: Point): void {
    if (!this.inBounds(point)) return;
    if (this.pending.kind === "awaiting-handle") {
      this.pending = { kind: "awaiting-target", handle: point };
    } else {
      const handle = this.pending.handle;
      this.pairs.push({ hx: handle.x, hy: handle.y, tx: point.x, ty: point.y });
      this.pending = { kind: "awaiting-handle" };
    }
  }

  /** Remove the most recent point (half-pair first, then last full pair). */
  undo(): void {
    if (this.pending.kind === "awaiting-target") {
      this.pending = { kind: "awaiting-handle" };
      return;
    }
    const last = this.pairs.pop();
    if (last) {
      this.pending = { kind: "awaiting-target", handle: { x: last.hx, y: last.hy } };
    }
  }

  clearPoints(): void {
    this.pairs = [];
    this.pending = { kind: "awaiting-handle" };
  }

  get completePairs(): WirePair[] {
    return [...this.pairs];
  }

  get canRun(): boolean {
    return this.pairs.length > 0 && !this.editInFlight;
  }

  applyEditResult(result: EditResponse): void {
    this.imageBase64 = result.image;
    this.history.push({
      mddCurve: result.mdd_curve,
      wallTimeMs: result.wall_time_ms,
      stepCount: result.step_count,
    });
    this.clearPoints();
  }

  private inBounds(point: Point): boolean {
    return point.x >= 0 && point.y >= 0 && point.x < this.resolution && point.y < this.resolution;
  }
}
