// Canvas painting: committed ink in black, proposals as tinted overlays.

import type { Session } from "./session.js";
import type { Point } from "./strokes.js";

const OVERLAY_COLORS = [
  "rgba(214, 69, 65, 0.55)",
  "rgba(31, 119, 180, 0.55)",
  "rgba(44, 160, 44, 0.55)",
  "rgba(148, 103, 189, 0.55)",
  "rgba(255, 127, 14, 0.55)",
];

function drawPolyline(ctx: CanvasRenderingContext2D, points: Point[]): void {
  ctx.beginPath();
  ctx.moveTo(points[0].x, points[0].y);
  for (let i = 1; i < points.length; i++) {
    ctx.lineTo(points[i].x, points[i].y);
  }
  ctx.stroke();
}

export function paint(ctx: CanvasRenderingContext2D, session: Session): void {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.lineCap = "round";
  ctx.lineJoin = "round";

  ctx.strokeStyle = "#111";
  ctx.lineWidth = 3;
  for (const stroke of session.committed) {
    drawPolyline(ctx, stroke.points);
  }

  ctx.lineWidth = 2.5;
  session.proposals.forEach((proposal, i) => {
    ctx.strokeStyle = OVERLAY_COLORS[i % OVERLAY_COLORS.length];
    for (const polyline of proposal.overlay) {
      drawPolyline(ctx, polyline);
    }
  });
}

export function paintPartialStroke(
  ctx: CanvasRenderingContext2D,
  points: Point[],
): void {
  if (points.length < 2) return;
  ctx.strokeStyle = "#111";
  ctx.lineWidth = 3;
  ctx.lineCap = "round";
  drawPolyline(ctx, points);
}
