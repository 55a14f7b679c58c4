/** Typed client for the drag-editing session API. */

export type SessionResponse = {
  session_id: string;
  seed: number;
  image: string; // base64 PNG
  resolution: number;
};

export type WirePair = { hx: number; hy: number; tx: number; ty: number };

export type EditResponse = {
  image: string; // base64 PNG
  mdd_curve: number[];
  md_curve: number[];
  wall_time_ms: number;
  step_count: number;
  synthesis_calls: number;
};

export type HealthResponse = { status: string; checkpoint_hash: string };

async function requestJson<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(`${base}${path}`, init);
  if (!response.ok) {
    const text = await response.text();
    throw new Error(`${init?.method ?? "GET"} ${path} failed: ${response.status} ${text}`);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private readonly base: string) {}

  health(): Promise<HealthResponse> {
    return requestJson<HealthResponse>(this.base, "/health");
  }

  createSession(seed?: number): Promise<SessionResponse> {
    return requestJson<SessionResponse>(this.base, "/session", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(seed === undefined ? {} : { seed }),
    });
  }

  runEdit(sessionId: string, pairs: WirePair[], nSteps?: number, rounds?: number): Promise<EditResponse> {
    const body: Record<string, unknown> = { pairs };
    if (nSteps !== undefined) body.n_steps = nSteps;
    if (rounds !== undefined) body.rounds = rounds;
    return requestJson<EditResponse>(this.base, `/session/${sessionId}/edit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}
