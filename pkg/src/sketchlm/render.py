"""Token sequences to polylines, SVG text, and an optional tiny rasterizer.

Integration starts at the canvas center and the result is re-fit into the
unit box, since token sequences carry only relative geometry. SVG output is
deterministic text (fixed attribute order, fixed decimal formatting) so tests
can compare golden files byte for byte.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .primitives import PrimitiveDictionary, Run
from .strokes import Sketch
from .tokenizer import TokenSequence, Vocabulary


@dataclass
class Polyline:
    points: np.ndarray  # [N, 2] in [0, 1]^2, N >= 2

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < 2 or self.points.shape[1] != 2:
            raise ValueError("polyline needs at least 2 2-D points")


@dataclass
class DecodeRepairs:
    notes: list[str] = field(default_factory=list)

    def add(self, note: str) -> None:
        self.notes.append(note)


class RenderError(ValueError):
    """Strict-mode decoding failure."""


def _tolerant_runs(ids: tuple[int, ...], vocab: Vocabulary, repairs: DecodeRepairs) -> list[Run]:
    runs: list[Run] = []
    current_id: int | None = None
    count = 0
    pen_flag = False
    pending_sep = False

    def close() -> None:
        nonlocal current_id, count
        if current_id is not None:
            runs.append(Run(current_id, count, pen_flag))
            current_id = None
            count = 0

    start = 0
    if ids and ids[0] == vocab.bos:
        start = 1
    else:
        repairs.add("missing BOS")
    for pos in range(start, len(ids)):
        tok = ids[pos]
        if tok == vocab.eos:
            break
        if tok == vocab.pad:
            repairs.add(f"truncated at PAD before EOS (position {pos})")
            break
        if tok == vocab.bos:
            repairs.add(f"truncated at unexpected BOS (position {pos})")
            break
        if tok == vocab.sep:
            if pending_sep:
                repairs.add(f"dropped duplicate SEP (position {pos})")
            else:
                close()
                pending_sep = True
            continue
        if not vocab.is_primitive(tok):
            repairs.add(f"truncated at invalid token {tok} (position {pos})")
            break
        if current_id == tok:
            count += 1
        else:
            close()
            current_id = tok
            count = 1
            pen_flag = pending_sep
            pending_sep = False
    close()
    if pending_sep:
        repairs.add("dropped dangling SEP")
    return runs


def runs_to_polylines(runs: list[Run], dictionary: PrimitiveDictionary) -> list[Polyline]:
    """Integrate run vectors from (0.5, 0.5), splitting at pen-up moves,
    then re-center and rescale to fit the unit box."""
    directions = dictionary.directions
    pos = np.array([0.5, 0.5])
    current: list[np.ndarray] = [pos.copy()]
    raw: list[np.ndarray] = []
    for run in runs:
        if not (0 <= run.primitive_id < dictionary.orientation_count):
            raise RenderError(f"unknown primitive id {run.primitive_id}")
        delta = directions[run.primitive_id] * (run.count * dictionary.primitive_length)
        pos = pos + delta
        if run.pen_up_move:
            if len(current) >= 2:
                raw.append(np.stack(current))
            current = [pos.copy()]
        else:
            current.append(pos.copy())
    if len(current) >= 2:
        raw.append(np.stack(current))
    if not raw:
        return []
    allpts = np.concatenate(raw)
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    span = float((hi - lo).max())
    center = (lo + hi) / 2.0
    out = []
    for pts in raw:
        if span > 0:
            pts = (pts - center) / span + 0.5
        else:
            pts = np.full_like(pts, 0.5)
        out.append(Polyline(points=pts))
    return out


def tokens_to_polylines(
    tokens: TokenSequence | tuple[int, ...],
    dictionary: PrimitiveDictionary,
    vocab: Vocabulary,
    tolerant: bool = False,
) -> tuple[list[Polyline], DecodeRepairs]:
    """Decode tokens and integrate primitive vectors into drawn polylines.

    Strict mode raises RenderError on any structural violation; tolerant mode
    repairs (drop dangling SEP, truncate at the first invalid token) and
    reports what it did.
    """
    from .tokenizer import TokenError, decode, sequence_from_ids

    if not isinstance(tokens, TokenSequence):
        tokens = sequence_from_ids(tokens, vocab)
    repairs = DecodeRepairs()
    if tolerant:
        runs = _tolerant_runs(tokens.ids, vocab, repairs)
    else:
        try:
            runs = list(decode(tokens, vocab).runs)
        except TokenError as exc:
            raise RenderError(str(exc)) from exc
    return runs_to_polylines(runs, dictionary), repairs


def sketch_to_polylines(sketch: Sketch) -> list[Polyline]:
    """Split a stroke-3 sketch at pen-ups; drawn segments only."""
    absolutes = sketch.absolutes()
    pens = sketch.pen_states()
    out: list[Polyline] = []
    current = [absolutes[0]]
    for k in range(1, len(absolutes)):
        if pens[k - 1] == 0:
            current.append(absolutes[k])
        else:
            if len(current) >= 2:
                out.append(Polyline(points=np.stack(current)))
            current = [absolutes[k]]
    if len(current) >= 2:
        out.append(Polyline(points=np.stack(current)))
    return out


def to_svg(polylines: list[Polyline], stroke_width: float = 2.0, canvas_px: int = 256) -> str:
    """Deterministic SVG 1.1 document, one path per polyline."""
    if canvas_px < 16:
        raise ValueError("canvas must be at least 16 px")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{canvas_px}" height="{canvas_px}" '
        f'viewBox="0 0 {canvas_px} {canvas_px}">'
    ]
    for pl in polylines:
        coords = pl.points * canvas_px
        d = "M " + " L ".join(f"{x:.3f} {y:.3f}" for x, y in coords)
        parts.append(
            f'<path d="{d}" fill="none" stroke="black" stroke-width="{stroke_width:g}" '
            f'stroke-linecap="round" stroke-linejoin="round"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def rasterize(polylines: list[Polyline], canvas_px: int = 64, line_width: float = 1.5) -> np.ndarray:
    """Fixed-width line stamping onto an 8-bit grayscale canvas (0=ink)."""
    img = np.full((canvas_px, canvas_px), 255, dtype=np.uint8)
    radius = max(line_width / 2.0, 0.5)
    for pl in polylines:
        pts = pl.points * (canvas_px - 1)
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            seg_len = float(np.hypot(x1 - x0, y1 - y0))
            n = max(2, int(seg_len / 0.5) + 1)
            for t in np.linspace(0.0, 1.0, n):
                cx = x0 + (x1 - x0) * t
                cy = y0 + (y1 - y0) * t
                lo_x = max(0, int(np.floor(cx - radius)))
                hi_x = min(canvas_px - 1, int(np.ceil(cx + radius)))
                lo_y = max(0, int(np.floor(cy - radius)))
                hi_y = min(canvas_px - 1, int(np.ceil(cy + radius)))
                for py in range(lo_y, hi_y + 1):
                    for px in range(lo_x, hi_x + 1):
                        if (px - cx) ** 2 + (py - cy) ** 2 <= radius**2:
                            img[py, px] = 0
    return img


def write_png(image: np.ndarray, path: str | Path) -> None:
    """Minimal 8-bit grayscale PNG writer (stdlib only)."""
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("expected an 8-bit grayscale image")
    h, w = image.shape

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    raw = b"".join(b"\x00" + image[y].tobytes() for y in range(h))
    out = b"\x89PNG\r\n\x1a\n"
    out += chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0))
    out += chunk(b"IDAT", zlib.compress(raw))
    out += chunk(b"IEND", b"")
    Path(path).write_bytes(out)


__all__ = [
    "Polyline",
    "DecodeRepairs",
    "RenderError",
    "tokens_to_polylines",
    "runs_to_polylines",
    "sketch_to_polylines",
    "to_svg",
    "rasterize",
    "write_png",
]
