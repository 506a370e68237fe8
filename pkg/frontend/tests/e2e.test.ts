// End-to-end: the real session/api modules against a locally served toy model.
// First run trains the toy checkpoints (cached under .toy-cache thereafter).

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { existsSync } from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { Session } from "../src/session.js";
import type { Point } from "../src/strokes.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const repoRoot = path.resolve(here, "../..");
const cacheDir = path.join(repoRoot, "frontend", ".toy-cache");
const serveConfig = path.join(cacheDir, "serve.yaml");
const PORT = 8491;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
const api = new ApiClient(BASE);

async function waitForHealth(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError = "";
  while (Date.now() < deadline) {
    try {
      const health = await api.health();
      if (health.status === "ok") return;
      lastError = `status ${health.status}`;
    } catch (err) {
      lastError = String(err);
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error(`service did not become healthy: ${lastError}`);
}

beforeAll(async () => {
  if (!existsSync(serveConfig)) {
    execFileSync(
      "python3",
      ["scripts/make_toy_service.py", "--out", cacheDir, "--port", String(PORT)],
      { cwd: repoRoot, stdio: "inherit", timeout: 240_000 },
    );
  }
  server = spawn(
    "python3",
    ["-m", "sketchlm.cli", "serve", "--config", serveConfig, "--port", String(PORT)],
    { cwd: repoRoot, stdio: "ignore" },
  );
  await waitForHealth(60_000);
});

afterAll(() => {
  server?.kill("SIGTERM");
});

function twoStrokePrefix(): Point[][] {
  // left edge then bottom edge of a square, canvas pixels
  return [
    [
      { x: 120, y: 120 },
      { x: 120, y: 180 },
      { x: 120, y: 240 },
    ],
    [
      { x: 120, y: 240 },
      { x: 180, y: 240 },
      { x: 240, y: 240 },
    ],
  ];
}

describe("canvas session against the live service", () => {
  it("completes, overlays, accepts, and re-requests", async () => {
    const session = new Session();
    session.selectedClass = "square";
    session.numSamples = 3;
    session.temperature = 0.8;
    session.seedLock = true;
    session.seed = 17;
    for (const stroke of twoStrokePrefix()) {
      expect(session.addStroke(stroke)).toBe(true);
    }
    expect(session.committed).toHaveLength(2);

    const t0 = Date.now();
    const first = await api.complete(session.payload());
    const firstLatency = Date.now() - t0;
    expect(firstLatency).toBeLessThan(2000);
    expect(first.completions).toHaveLength(3);
    expect(first.prefix_token_count).toBeGreaterThan(0);

    session.setProposals(first.completions);
    expect(session.proposals).toHaveLength(3); // 3 overlays rendered

    // each proposal's prefix retraces the drawn strokes (within primitive
    // quantization) once the shared fit transform is applied
    const span = 120; // drawn prefix spans 120 px
    for (let i = 0; i < session.proposals.length; i++) {
      const prefix = session.proposalPrefix(i);
      expect(prefix.length).toBe(session.committed.length);
      prefix.forEach((polyline, strokeIndex) => {
        const drawn = session.committed[strokeIndex].points;
        const endpoints = [polyline[0], polyline[polyline.length - 1]];
        const drawnEnds = [drawn[0], drawn[drawn.length - 1]];
        endpoints.forEach((p, j) => {
          const d = Math.hypot(p.x - drawnEnds[j].x, p.y - drawnEnds[j].y);
          expect(d).toBeLessThan(0.15 * span);
        });
      });
    }

    // accept the first proposal, then a new request extends the merged drawing
    const before = session.committed.length;
    expect(session.acceptProposal(0)).toBe(true);
    expect(session.committed.length).toBeGreaterThan(before);
    expect(session.proposals).toHaveLength(0);

    const t1 = Date.now();
    const second = await api.complete(session.payload());
    const secondLatency = Date.now() - t1;
    expect(secondLatency).toBeLessThan(2000);
    expect(second.prefix_token_count).toBeGreaterThan(first.prefix_token_count);
    session.setProposals(second.completions);
    expect(session.proposals.length).toBe(3);
  }, 60_000);

  it("seeded requests reproduce byte-identically", async () => {
    const session = new Session();
    session.selectedClass = "triangle";
    session.seedLock = true;
    session.seed = 5;
    session.numSamples = 2;
    session.addStroke([
      { x: 100, y: 300 },
      { x: 200, y: 100 },
    ]);
    const a = await api.complete(session.payload());
    const b = await api.complete(session.payload());
    expect(JSON.stringify(a)).toBe(JSON.stringify(b));
  }, 30_000);

  it("classifies the committed drawing", async () => {
    const session = new Session();
    session.selectedClass = "square";
    for (const stroke of twoStrokePrefix()) session.addStroke(stroke);
    const result = await api.classify(session.payload().strokes);
    expect(result.k).toBe(2);
    const classes = result.topk.map((t) => t.class).sort();
    expect(classes).toEqual(["square", "triangle"]);
    const probs = result.topk.map((t) => t.probability);
    expect(probs[0]).toBeGreaterThanOrEqual(probs[1]);
  }, 30_000);

  it("surfaces service errors without touching state", async () => {
    const session = new Session();
    session.selectedClass = "dragon";
    session.addStroke([
      { x: 0, y: 0 },
      { x: 50, y: 50 },
    ]);
    const before = JSON.stringify(session.committed);
    await expect(api.complete(session.payload())).rejects.toMatchObject({ status: 404 });
    expect(JSON.stringify(session.committed)).toBe(before);
  }, 30_000);
});
