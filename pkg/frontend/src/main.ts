// Page wiring: pointer capture, controls, request lifecycle.

import { ApiClient, ApiError } from "./api.js";
import { paint, paintPartialStroke } from "./render.js";
import { Session } from "./session.js";
import type { Point } from "./strokes.js";

const canvas = document.getElementById("sketch") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const classSelect = document.getElementById("class") as HTMLSelectElement;
const temperatureInput = document.getElementById("temperature") as HTMLInputElement;
const temperatureLabel = document.getElementById("temperature-label") as HTMLElement;
const samplesInput = document.getElementById("samples") as HTMLInputElement;
const seedLockInput = document.getElementById("seed-lock") as HTMLInputElement;
const seedInput = document.getElementById("seed") as HTMLInputElement;
const completeButton = document.getElementById("complete") as HTMLButtonElement;
const acceptButtons = document.getElementById("accept-buttons") as HTMLElement;
const rejectButton = document.getElementById("reject") as HTMLButtonElement;
const classifyButton = document.getElementById("classify") as HTMLButtonElement;
const clearButton = document.getElementById("clear") as HTMLButtonElement;
const statusLine = document.getElementById("status") as HTMLElement;
const resultsLine = document.getElementById("results") as HTMLElement;

const api = new ApiClient("");
const session = new Session();
let pointerDown = false;
let rawPoints: Point[] = [];

function setStatus(text: string, isError = false): void {
  statusLine.textContent = text;
  statusLine.className = isError ? "error" : "";
}

function syncControls(): void {
  completeButton.disabled = !session.canRequest();
  classifyButton.disabled = session.committed.length === 0 || session.busy;
  rejectButton.disabled = session.proposals.length === 0;
  acceptButtons.replaceChildren(
    ...session.proposals.map((_, i) => {
      const button = document.createElement("button");
      button.textContent = `Accept ${i + 1}`;
      button.addEventListener("click", () => {
        session.acceptProposal(i);
        paint(ctx, session);
        syncControls();
        setStatus("proposal merged; draw more or request again");
      });
      return button;
    }),
  );
}

function canvasPoint(event: PointerEvent): Point {
  const rect = canvas.getBoundingClientRect();
  return { x: event.clientX - rect.left, y: event.clientY - rect.top };
}

canvas.addEventListener("pointerdown", (event) => {
  pointerDown = true;
  rawPoints = [canvasPoint(event)];
  canvas.setPointerCapture(event.pointerId);
});

canvas.addEventListener("pointermove", (event) => {
  if (!pointerDown) return;
  rawPoints.push(canvasPoint(event));
  paint(ctx, session);
  paintPartialStroke(ctx, rawPoints);
});

canvas.addEventListener("pointerup", () => {
  pointerDown = false;
  const added = session.addStroke(rawPoints);
  rawPoints = [];
  paint(ctx, session);
  syncControls();
  if (!added) setStatus("tap discarded: draw a stroke, not a dot");
});

completeButton.addEventListener("click", async () => {
  if (!session.canRequest()) return;
  session.selectedClass = classSelect.value;
  session.temperature = Number(temperatureInput.value);
  session.numSamples = Number(samplesInput.value);
  session.seedLock = seedLockInput.checked;
  session.seed = Number(seedInput.value) || 0;
  session.busy = true;
  syncControls();
  setStatus("requesting completions…");
  const started = performance.now();
  try {
    const response = await api.complete(session.payload());
    session.lastSeed = response.seed;
    seedInput.value = String(response.seed);
    session.setProposals(response.completions);
    paint(ctx, session);
    setStatus(
      `${response.completions.length} proposals in ` +
        `${Math.round(performance.now() - started)} ms (seed ${response.seed})`,
    );
  } catch (err) {
    const detail = err instanceof ApiError ? err.detail : String(err);
    setStatus(`completion failed: ${detail}`, true);
  } finally {
    session.busy = false;
    syncControls();
  }
});

rejectButton.addEventListener("click", () => {
  session.rejectAll();
  paint(ctx, session);
  syncControls();
  setStatus("proposals cleared");
});

classifyButton.addEventListener("click", async () => {
  session.busy = true;
  syncControls();
  try {
    const response = await api.classify(session.payload().strokes);
    resultsLine.textContent = response.topk
      .map((t) => `${t.class} ${(t.probability * 100).toFixed(1)}%`)
      .join("  ·  ");
  } catch (err) {
    const detail = err instanceof ApiError ? err.detail : String(err);
    setStatus(`classify failed: ${detail}`, true);
  } finally {
    session.busy = false;
    syncControls();
  }
});

clearButton.addEventListener("click", () => {
  session.clear();
  paint(ctx, session);
  syncControls();
  resultsLine.textContent = "";
  setStatus("canvas cleared");
});

temperatureInput.addEventListener("input", () => {
  temperatureLabel.textContent = Number(temperatureInput.value).toFixed(1);
});

async function boot(): Promise<void> {
  try {
    const health = await api.health();
    const classes = health.loaded_checkpoints.filter((c) => c !== "__classifier__");
    classSelect.replaceChildren(
      ...classes.map((name) => {
        const option = document.createElement("option");
        option.value = name;
        option.textContent = name;
        return option;
      }),
    );
    if (classes.length > 0) session.selectedClass = classes[0];
    setStatus(`connected (${health.status}); draw a partial sketch`);
  } catch {
    setStatus("service unreachable: start `sketchlm serve` first", true);
  }
  syncControls();
}

void boot();
