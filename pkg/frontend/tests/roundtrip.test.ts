/** UI round trip against a mocked server: one complete pair and a run must
 *  issue exactly one edit request, replace the displayed image with the
 *  response image, and produce a sparkline whose first value is 1.0; a
 *  zero-drag pair leaves the displayed image identical.
 */
import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { sparklinePath } from "../src/sparkline.js";
import { UiSession } from "../src/state.js";

const ORIGINAL_IMAGE = "T1JJR0lOQUw=";

function stubServer(editImage: string) {
  const calls: { url: string; body: any }[] = [];
  vi.stubGlobal(
    "fetch",
    vi.fn(async (url: string, init?: RequestInit) => {
      const body = init?.body ? JSON.parse(init.body as string) : {};
      calls.push({ url, body });
      if (url.endsWith("/session")) {
        return {
          ok: true, status: 200,
          json: async () => ({ session_id: "sid", seed: 3, image: ORIGINAL_IMAGE, resolution: 64 }),
          text: async () => "",
        };
      }
      return {
        ok: true, status: 200,
        json: async () => ({
          image: editImage,
          mdd_curve: [1.0, 0.55, 0.31],
          md_curve: [12.0, 6.6, 3.7],
          wall_time_ms: 25.0,
          step_count: 2,
          synthesis_calls: 3,
        }),
        text: async () => "",
      };
    }),
  );
  return calls;
}

afterEach(() => vi.unstubAllGlobals());

async function openSessionAndRun(calls: ReturnType<typeof stubServer>, pair: [number, number, number, number]) {
  const api = new ApiClient("http://server");
  const created = await api.createSession(3);
  const session = new UiSession(created.session_id, created.seed, created.resolution, created.image);
  session.placePoint({ x: pair[0], y: pair[1] });
  session.placePoint({ x: pair[2], y: pair[3] });
  const result = await api.runEdit(session.sessionId, session.completePairs);
  session.applyEditResult(result);
  return { session, result };
}

describe("UI round trip", () => {
  it("one pair + run issues exactly one edit request and renders the response image", async () => {
    const calls = stubServer("RURJVEVE");
    const { session, result } = await openSessionAndRun(calls, [20, 20, 40, 30]);

    const editCalls = calls.filter((c) => c.url.includes("/edit"));
    expect(editCalls).toHaveLength(1);
    expect(editCalls[0].body.pairs).toEqual([{ hx: 20, hy: 20, tx: 40, ty: 30 }]);
    expect(session.imageBase64).toBe("RURJVEVE");

    // sparkline first value is the 1.0 anchor
    expect(result.mdd_curve[0]).toBe(1.0);
    const path = sparklinePath(result.mdd_curve, 160, 36, 2);
    expect(path.startsWith("M 2.00 2.00")).toBe(true);
  });

  it("zero-drag pair leaves the displayed image pixel-identical", async () => {
    const calls = stubServer(ORIGINAL_IMAGE); // server returns the unchanged render
    const { session } = await openSessionAndRun(calls, [25, 25, 25, 25]);
    expect(calls.filter((c) => c.url.includes("/edit"))).toHaveLength(1);
    expect(session.imageBase64).toBe(ORIGINAL_IMAGE);
  });
});
