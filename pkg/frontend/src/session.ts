// Drawing-session state machine. Committed strokes are append-only: proposal
// display, acceptance, and rejection never mutate what the user drew.

import type { CompletionWire } from "./api.js";
import {
  bbox,
  fitTransform,
  resampleStroke,
  stroke3ToPolylines,
  strokesToStroke3,
  type CanvasStroke,
  type Point,
  type Stroke3,
} from "./strokes.js";

export interface Proposal {
  wire: CompletionWire;
  /** continuation polylines mapped into canvas space, ready to overlay */
  overlay: Point[][];
}

export class Session {
  committed: CanvasStroke[] = [];
  proposals: Proposal[] = [];
  selectedClass = "";
  temperature = 1.0;
  numSamples = 3;
  seedLock = false;
  seed = 0;
  lastSeed: number | null = null;
  busy = false;

  /** Append a drawn stroke; returns false when a tap was discarded. */
  addStroke(raw: Point[], minSpacing = 3): boolean {
    const stroke = resampleStroke(raw, minSpacing);
    if (stroke === null) return false;
    this.committed = [...this.committed, stroke];
    this.proposals = []; // stale once the drawing changed
    return true;
  }

  canRequest(): boolean {
    return this.committed.length >= 1 && this.selectedClass !== "" && !this.busy;
  }

  payload(): {
    class: string;
    strokes: Stroke3[];
    num_samples: number;
    temperature: number;
    seed?: number;
  } {
    const body: ReturnType<Session["payload"]> = {
      class: this.selectedClass,
      strokes: strokesToStroke3(this.committed),
      num_samples: this.numSamples,
      temperature: this.temperature,
    };
    if (this.seedLock) body.seed = this.seed;
    return body;
  }

  committedPoints(): Point[] {
    return this.committed.flatMap((s) => s.points);
  }

  /**
   * Map server completions into canvas-space overlays. The first
   * committed.length polylines of each completion retrace the prefix (up to
   * primitive quantization); everything after is the proposed continuation.
   */
  setProposals(completions: CompletionWire[]): void {
    const anchor = bbox(this.committedPoints());
    const n = this.committed.length;
    this.proposals = completions.map((wire) => {
      const polylines = stroke3ToPolylines(wire.strokes);
      const prefix = polylines.slice(0, n).flat();
      const transform = fitTransform(
        bbox(prefix.length >= 2 ? prefix : polylines.flat()),
        anchor,
      );
      return {
        wire,
        overlay: polylines.slice(n).map((pl) => pl.map(transform)),
      };
    });
  }

  /** Proposal prefix polylines in canvas space, for alignment checks. */
  proposalPrefix(index: number): Point[][] {
    const wire = this.proposals[index].wire;
    const polylines = stroke3ToPolylines(wire.strokes);
    const n = this.committed.length;
    const prefix = polylines.slice(0, n);
    const transform = fitTransform(
      bbox(prefix.flat().length >= 2 ? prefix.flat() : polylines.flat()),
      bbox(this.committedPoints()),
    );
    return prefix.map((pl) => pl.map(transform));
  }

  rejectAll(): void {
    this.proposals = [];
  }

  /** Merge one proposal's continuation into the committed drawing. */
  acceptProposal(index: number): boolean {
    const proposal = this.proposals[index];
    if (!proposal) return false;
    const added = proposal.overlay
      .filter((pl) => pl.length >= 2)
      .map((pl) => ({ points: pl }));
    if (added.length === 0) {
      this.proposals = [];
      return false;
    }
    this.committed = [...this.committed, ...added];
    this.proposals = [];
    return true;
  }

  clear(): void {
    this.committed = [];
    this.proposals = [];
    this.lastSeed = null;
  }
}
