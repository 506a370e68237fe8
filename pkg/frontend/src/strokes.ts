// Stroke capture and stroke-3 conversion, kept DOM-free so tests can drive it.

export interface Point {
  x: number;
  y: number;
}

export interface CanvasStroke {
  points: Point[]; // >= 2 after resampling
}

export type Stroke3 = [number, number, number]; // dx, dy, pen

/**
 * Thin out pointer samples to a minimum spacing. Returns null for taps
 * (fewer than 2 surviving points), which the UI discards with a hint.
 */
export function resampleStroke(raw: Point[], minSpacing = 3): CanvasStroke | null {
  if (raw.length === 0) return null;
  const kept: Point[] = [raw[0]];
  for (let i = 1; i < raw.length; i++) {
    const last = kept[kept.length - 1];
    if (Math.hypot(raw[i].x - last.x, raw[i].y - last.y) >= minSpacing) {
      kept.push(raw[i]);
    }
  }
  const tail = raw[raw.length - 1];
  const lastKept = kept[kept.length - 1];
  if (kept.length >= 2 && (tail.x !== lastKept.x || tail.y !== lastKept.y)) {
    kept.push(tail); // keep the exact lift point
  }
  return kept.length >= 2 ? { points: kept } : null;
}

/**
 * Committed canvas strokes to stroke-3 triples: the first point anchors at
 * (0, 0); every stroke's final point carries pen = 1; the offset stored on
 * the following point is the pen-up move.
 */
export function strokesToStroke3(strokes: CanvasStroke[]): Stroke3[] {
  const triples: Stroke3[] = [];
  let prev: Point | null = null;
  for (const stroke of strokes) {
    stroke.points.forEach((p, i) => {
      const pen = i === stroke.points.length - 1 ? 1 : 0;
      if (prev === null) {
        triples.push([0, 0, pen]);
      } else {
        triples.push([p.x - prev.x, p.y - prev.y, pen]);
      }
      prev = p;
    });
  }
  return triples;
}

/** Integrate stroke-3 back into drawn polylines, splitting at pen-ups. */
export function stroke3ToPolylines(triples: Stroke3[]): Point[][] {
  const polylines: Point[][] = [];
  let pos = { x: 0, y: 0 };
  let current: Point[] = [];
  let penWasUp = true; // the first point starts a stroke
  for (const [dx, dy, pen] of triples) {
    pos = { x: pos.x + dx, y: pos.y + dy };
    if (penWasUp) {
      if (current.length >= 2) polylines.push(current);
      current = [pos];
    } else {
      current.push(pos);
    }
    penWasUp = pen === 1;
  }
  if (current.length >= 2) polylines.push(current);
  return polylines;
}

export interface Box {
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
}

export function bbox(points: Point[]): Box {
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  return {
    minX: Math.min(...xs),
    minY: Math.min(...ys),
    maxX: Math.max(...xs),
    maxY: Math.max(...ys),
  };
}

/**
 * Uniform scale + translation mapping `from`'s box onto `to`'s (centers
 * aligned, larger side matched). Angles survive; this is how a proposal's
 * normalized geometry lands back on the user's drawing.
 */
export function fitTransform(from: Box, to: Box): (p: Point) => Point {
  const fromSpan = Math.max(from.maxX - from.minX, from.maxY - from.minY) || 1;
  const toSpan = Math.max(to.maxX - to.minX, to.maxY - to.minY) || 1;
  const scale = toSpan / fromSpan;
  const fromCx = (from.minX + from.maxX) / 2;
  const fromCy = (from.minY + from.maxY) / 2;
  const toCx = (to.minX + to.maxX) / 2;
  const toCy = (to.minY + to.maxY) / 2;
  return (p) => ({
    x: (p.x - fromCx) * scale + toCx,
    y: (p.y - fromCy) * scale + toCy,
  });
}
