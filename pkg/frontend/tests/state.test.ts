import { describe, expect, it } from "vitest";

import type { EditResponse } from "../src/api.js";
import { UiSession } from "../src/state.js";

function freshSession(): UiSession {
  return new UiSession("sid", 7, 64, "AAAA");
}

describe("UiSession point placement", () => {
  it("first click places a handle, second completes the pair", () => {
    const s = freshSession();
    s.placePoint({ x: 10, y: 12 });
    expect(s.pending).toEqual({ kind: "awaiting-target", handle: { x: 10, y: 12 } });
    expect(s.pairs).toHaveLength(0);

    s.placePoint({ x: 30, y: 40 });
    expect(s.pending.kind).toBe("awaiting-handle");
    expect(s.pairs).toEqual([{ hx: 10, hy: 12, tx: 30, ty: 40 }]);
  });

  it("a pair is submitted only when both points are placed", () => {
    const s = freshSession();
    s.placePoint({ x: 5, y: 5 });
    expect(s.completePairs).toHaveLength(0);
    expect(s.canRun).toBe(false);
    s.placePoint({ x: 6, y: 6 });
    expect(s.completePairs).toHaveLength(1);
    expect(s.canRun).toBe(true);
  });

  it("ignores clicks outside the image", () => {
    const s = freshSession();
    s.placePoint({ x: -1, y: 0 });
    s.placePoint({ x: 64, y: 10 });
    expect(s.pending.kind).toBe("awaiting-handle");
    expect(s.pairs).toHaveLength(0);
  });

  it("undo removes the half-placed handle first, then reopens the last pair", () => {
    const s = freshSession();
    s.placePoint({ x: 1, y: 1 });
    s.placePoint({ x: 2, y: 2 });
    s.placePoint({ x: 3, y: 3 });
    s.undo(); // removes pending handle (3,3)
    expect(s.pending.kind).toBe("awaiting-handle");
    expect(s.pairs).toHaveLength(1);
    s.undo(); // reopens pair -> handle (1,1) pending again
    expect(s.pending).toEqual({ kind: "awaiting-target", handle: { x: 1, y: 1 } });
    expect(s.pairs).toHaveLength(0);
  });
});

describe("UiSession edit results", () => {
  const result: EditResponse = {
    image: "BBBB",
    mdd_curve: [1.0, 0.6, 0.3],
    md_curve: [10, 6, 3],
    wall_time_ms: 42,
    step_count: 2,
    synthesis_calls: 3,
  };

  it("replaces the image, appends history, clears points", () => {
    const s = freshSession();
    s.placePoint({ x: 1, y: 1 });
    s.placePoint({ x: 2, y: 2 });
    s.applyEditResult(result);
    expect(s.imageBase64).toBe("BBBB");
    expect(s.history).toHaveLength(1);
    expect(s.history[0].mddCurve[0]).toBe(1.0);
    expect(s.pairs).toHaveLength(0);
  });

  it("history grows by one per edit", () => {
    const s = freshSession();
    s.applyEditResult(result);
    s.applyEditResult(result);
    expect(s.history).toHaveLength(2);
  });

  it("run is disabled while an edit is in flight", () => {
    const s = freshSession();
    s.placePoint({ x: 1, y: 1 });
    s.placePoint({ x: 2, y: 2 });
    s.editInFlight = true;
    expect(s.canRun).toBe(false);
  });
});
