import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";

function mockFetch(body: unknown, ok = true, status = 200) {
  const fn = vi.fn(async () => ({
    ok,
    status,
    json: async () => body,
    text: async () => JSON.stringify(body),
  }));
  vi.stubGlobal("fetch", fn);
  return fn;
}

afterEach(() => vi.unstubAllGlobals());

describe("ApiClient", () => {
  it("posts the seed to /session", async () => {
    const fn = mockFetch({ session_id: "s", seed: 9, image: "AA", resolution: 64 });
    const api = new ApiClient("http://test");
    const body = await api.createSession(9);
    expect(body.session_id).toBe("s");
    expect(fn).toHaveBeenCalledWith("http://test/session", expect.objectContaining({ method: "POST" }));
    const payload = JSON.parse((fn.mock.calls[0] as any)[1].body);
    expect(payload).toEqual({ seed: 9 });
  });

  it("omits the seed for a random session", async () => {
    const fn = mockFetch({ session_id: "s", seed: 1, image: "AA", resolution: 64 });
    await new ApiClient("http://test").createSession();
    const payload = JSON.parse((fn.mock.calls[0] as any)[1].body);
    expect(payload).toEqual({});
  });

  it("posts pairs in wire format to /session/{id}/edit", async () => {
    const fn = mockFetch({
      image: "BB", mdd_curve: [1, 0.5], md_curve: [8, 4],
      wall_time_ms: 10, step_count: 1, synthesis_calls: 2,
    });
    const api = new ApiClient("http://test");
    await api.runEdit("abc", [{ hx: 1, hy: 2, tx: 3, ty: 4 }], 5, 1);
    expect(fn).toHaveBeenCalledWith("http://test/session/abc/edit", expect.anything());
    const payload = JSON.parse((fn.mock.calls[0] as any)[1].body);
    expect(payload).toEqual({ pairs: [{ hx: 1, hy: 2, tx: 3, ty: 4 }], n_steps: 5, rounds: 1 });
  });

  it("raises a readable error on non-2xx", async () => {
    mockFetch({ detail: "handle off object" }, false, 400);
    const api = new ApiClient("http://test");
    await expect(api.runEdit("abc", [{ hx: 0, hy: 0, tx: 1, ty: 1 }])).rejects.toThrow(/400/);
  });
});
