/** Wiring: canvas, seed box, run/undo buttons, MDD sparkline, history. */

import { ApiClient } from "./api.js";
import { canvasToImage } from "./geometry.js";
import type { CanvasGeometry } from "./geometry.js";
import { drawMarkers } from "./markers.js";
import { sparklineSvg } from "./sparkline.js";
import { UiSession } from "./state.js";

const CANVAS_SIZE = 384;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("editor-canvas");
const ctx = canvas.getContext("2d")!;
const seedInput = el<HTMLInputElement>("seed-input");
const newButton = el<HTMLButtonElement>("new-seed");
const runButton = el<HTMLButtonElement>("run-edit");
const undoButton = el<HTMLButtonElement>("undo-point");
const statusLine = el<HTMLDivElement>("status-line");
const sparkBox = el<HTMLDivElement>("sparkline");
const historyBox = el<HTMLUListElement>("history");
const errorBanner = el<HTMLDivElement>("error-banner");

const api = new ApiClient(
  new URLSearchParams(location.search).get("api") ?? "http://127.0.0.1:8321",
);

let session: UiSession | null = null;
let image: HTMLImageElement | null = null;

function geometry(): CanvasGeometry {
  return { canvasSize: CANVAS_SIZE, imageSize: session?.resolution ?? 64 };
}

function setError(message: string | null): void {
  errorBanner.textContent = message ?? "";
  errorBanner.style.display = message ? "block" : "none";
}

function setImage(base64: string): void {
  image = new Image();
  image.onload = redraw;
  image.src = `data:image/png;base64,${base64}`;
}

function redraw(): void {
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, CANVAS_SIZE, CANVAS_SIZE);
  if (image) ctx.drawImage(image, 0, 0, CANVAS_SIZE, CANVAS_SIZE);
  if (session) drawMarkers(ctx, geometry(), session.pairs, session.pending);
  updateControls();
}

function updateControls(): void {
  runButton.disabled = !session?.canRun;
  const pairs = session?.pairs.length ?? 0;
  const pendingHalf = session?.pending.kind === "awaiting-target" ? " + handle placed" : "";
  statusLine.textContent = session
    ? `${pairs} pair${pairs === 1 ? "" : "s"}${pendingHalf} — click to place ` +
      (session.pending.kind === "awaiting-handle" ? "a handle (red)" : "its target (blue)")
    : "no session";
}

async function newSession(): Promise<void> {
  setError(null);
  try {
    const seedText = seedInput.value.trim();
    const body = await api.createSession(seedText === "" ? undefined : Number(seedText));
    session = new UiSession(body.session_id, body.seed, body.resolution, body.image);
    seedInput.value = String(body.seed);
    sparkBox.innerHTML = "";
    historyBox.innerHTML = "";
    setImage(body.image);
  } catch (err) {
    setError(`could not create session: ${(err as Error).message}`);
  }
}

async function runEdit(): Promise<void> {
  if (!session || !session.canRun) return;
  setError(null);
  session.editInFlight = true;
  updateControls();
  try {
    const result = await api.runEdit(session.sessionId, session.completePairs);
    session.applyEditResult(result);
    setImage(result.image);
    sparkBox.innerHTML =
      sparklineSvg(result.mdd_curve) +
      `<span class="spark-label">MDD ${result.mdd_curve[result.mdd_curve.length - 1].toFixed(2)}` +
      ` — ${result.wall_time_ms.toFixed(0)} ms</span>`;
    const item = document.createElement("li");
    item.textContent = `edit #${session.history.length}: ${result.step_count} steps, ` +
      `final MDD ${result.mdd_curve[result.mdd_curve.length - 1].toFixed(3)}`;
    historyBox.appendChild(item);
  } catch (err) {
    setError(`edit failed: ${(err as Error).message}`);
  } finally {
    session.editInFlight = false;
    redraw();
  }
}

canvas.addEventListener("click", (event) => {
  if (!session || session.editInFlight) return;
  const rect = canvas.getBoundingClientRect();
  const point = canvasToImage(geometry(), event.clientX - rect.left, event.clientY - rect.top);
  if (point) {
    session.placePoint(point);
    redraw();
  }
});

undoButton.addEventListener("click", () => {
  session?.undo();
  redraw();
});
newButton.addEventListener("click", () => void newSession());
runButton.addEventListener("click", () => void runEdit());

canvas.width = CANVAS_SIZE;
canvas.height = CANVAS_SIZE;
void newSession();
