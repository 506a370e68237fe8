"""Stroke-3 sketch data: parsing, normalization, and binary corpus persistence.

A sketch is a sequence of (dx, dy, pen) points. Offsets are relative to the
previous point; the first point's offset anchors the drawing (raw parses store
it as (0, 0)). pen = 1 means the pen lifts after reaching that point, so the
offset stored on the *next* point is a move through the air.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

CORPUS_MAGIC = b"SKC1"
CORPUS_VERSION = 1

_POINT = struct.Struct("<ddB")  # dx, dy, pen
_U32 = struct.Struct("<I")


class DegenerateSketchError(ValueError):
    """Sketch has no usable geometry (zero coordinate range)."""


class CorpusFormatError(ValueError):
    """Corpus file is corrupt, truncated, or has the wrong version."""


@dataclass(frozen=True)
class Stroke3Point:
    dx: float
    dy: float
    pen: int

    def __post_init__(self) -> None:
        if self.pen not in (0, 1):
            raise ValueError(f"pen must be 0 or 1, got {self.pen}")


@dataclass(frozen=True)
class Sketch:
    points: tuple[Stroke3Point, ...]
    label: str | None = None

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("sketch must contain at least one point")

    @property
    def pen_up_count(self) -> int:
        return sum(p.pen for p in self.points)

    def offsets(self) -> np.ndarray:
        """(N, 2) float64 array of offsets."""
        return np.array([(p.dx, p.dy) for p in self.points], dtype=np.float64)

    def pen_states(self) -> np.ndarray:
        return np.array([p.pen for p in self.points], dtype=np.int64)

    def absolutes(self) -> np.ndarray:
        """Cumulative positions, one per point, starting at the first offset."""
        return np.cumsum(self.offsets(), axis=0)


def sketch_from_arrays(offsets: np.ndarray, pens: np.ndarray, label: str | None = None) -> Sketch:
    pts = tuple(
        Stroke3Point(float(dx), float(dy), int(p)) for (dx, dy), p in zip(offsets, pens)
    )
    return Sketch(points=pts, label=label)


@dataclass
class SketchCorpus:
    sketches: list[Sketch]
    class_names: list[str] = field(default_factory=list)
    split: str = "train"

    def __post_init__(self) -> None:
        if self.split not in ("train", "validation", "test"):
            raise ValueError(f"unknown split {self.split!r}")
        known = set(self.class_names)
        for s in self.sketches:
            if s.label is not None and s.label not in known:
                raise ValueError(f"sketch label {s.label!r} not in class_names")

    def __len__(self) -> int:
        return len(self.sketches)

    def subset(self, classes: Iterable[str]) -> "SketchCorpus":
        wanted = [c for c in self.class_names if c in set(classes)]
        kept = [s for s in self.sketches if s.label in set(wanted)]
        return SketchCorpus(sketches=kept, class_names=wanted, split=self.split)


@dataclass
class ParseReport:
    parsed: int = 0
    skipped_empty: int = 0
    errors: list[str] = field(default_factory=list)


def parse_quickdraw_ndjson(
    stream: BinaryIO | Iterable[bytes] | Iterable[str],
    split: str = "train",
) -> tuple[SketchCorpus, ParseReport]:
    """Parse newline-delimited QuickDraw "simplified drawing" JSON.

    Each line holds {"word": class, "drawing": [[xs, ys], ...]} with absolute
    coordinates per stroke. Malformed lines are collected in the report and
    parsing continues; empty drawings are skipped with a warning count.
    """
    report = ParseReport()
    sketches: list[Sketch] = []
    class_names: list[str] = []
    seen = set()
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", errors="replace")
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            word = obj["word"]
            drawing = obj["drawing"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            report.errors.append(f"line {lineno}: {exc}")
            continue
        if not drawing:
            report.skipped_empty += 1
            continue
        try:
            sketch = _drawing_to_stroke3(drawing, label=str(word))
        except (ValueError, IndexError, TypeError) as exc:
            report.errors.append(f"line {lineno}: {exc}")
            continue
        sketches.append(sketch)
        report.parsed += 1
        if word not in seen:
            seen.add(word)
            class_names.append(str(word))
    return SketchCorpus(sketches=sketches, class_names=class_names, split=split), report


def _drawing_to_stroke3(drawing: list, label: str | None) -> Sketch:
    xs_all: list[float] = []
    ys_all: list[float] = []
    ends: list[int] = []  # indices of stroke-final points
    for stroke in drawing:
        xs, ys = stroke[0], stroke[1]
        if len(xs) != len(ys):
            raise ValueError("stroke x/y arrays differ in length")
        if len(xs) == 0:
            continue
        xs_all.extend(float(v) for v in xs)
        ys_all.extend(float(v) for v in ys)
        ends.append(len(xs_all) - 1)
    if not xs_all:
        raise ValueError("drawing contains only empty strokes")
    n = len(xs_all)
    pens = np.zeros(n, dtype=np.int64)
    pens[ends] = 1
    abs_pts = np.stack([xs_all, ys_all], axis=1)
    offsets = np.empty_like(abs_pts)
    offsets[0] = 0.0  # first offset is relative to the first absolute point
    offsets[1:] = np.diff(abs_pts, axis=0)
    return sketch_from_arrays(offsets, pens, label=label)


def normalize(sketch: Sketch) -> Sketch:
    """Min-max scale cumulative coordinates into [0, 1] on both axes.

    Both axes share the larger coordinate range so angles survive; per-axis
    scaling would rotate strokes and corrupt the primitive mapping.
    """
    absolutes = sketch.absolutes()
    mins = absolutes.min(axis=0)
    ranges = absolutes.max(axis=0) - mins
    scale = float(ranges.max())
    if scale <= 0.0:
        raise DegenerateSketchError("degenerate geometry")
    scaled = (absolutes - mins) / scale
    offsets = np.empty_like(scaled)
    offsets[0] = scaled[0]
    offsets[1:] = np.diff(scaled, axis=0)
    return sketch_from_arrays(offsets, sketch.pen_states(), label=sketch.label)


def is_normalized(sketch: Sketch, tol: float = 1e-9) -> bool:
    absolutes = sketch.absolutes()
    return bool((absolutes.min() >= -tol) and (absolutes.max() <= 1.0 + tol))


def save_corpus(corpus: SketchCorpus, path: str | Path) -> None:
    """Write length-prefixed binary records plus a JSON metadata sidecar."""
    path = Path(path)
    label_index = {name: i for i, name in enumerate(corpus.class_names)}
    buf = io.BytesIO()
    buf.write(CORPUS_MAGIC)
    buf.write(_U32.pack(CORPUS_VERSION))
    buf.write(_U32.pack(len(corpus.sketches)))
    for sketch in corpus.sketches:
        rec = io.BytesIO()
        idx = label_index[sketch.label] if sketch.label is not None else -1
        rec.write(struct.pack("<i", idx))
        rec.write(_U32.pack(len(sketch.points)))
        for p in sketch.points:
            rec.write(_POINT.pack(p.dx, p.dy, p.pen))
        payload = rec.getvalue()
        buf.write(_U32.pack(len(payload)))
        buf.write(payload)
    path.write_bytes(buf.getvalue())
    sidecar = {
        "format_version": CORPUS_VERSION,
        "class_names": corpus.class_names,
        "split": corpus.split,
        "count": len(corpus.sketches),
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n")


def load_corpus(path: str | Path) -> SketchCorpus:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != CORPUS_MAGIC:
        raise CorpusFormatError(f"not a corpus file (bad magic): {path}")
    (version,) = _U32.unpack_from(data, 4)
    if version != CORPUS_VERSION:
        raise CorpusFormatError(
            f"corpus format version mismatch: file has {version}, expected {CORPUS_VERSION}"
        )
    (count,) = _U32.unpack_from(data, 8)
    try:
        meta = json.loads(_sidecar_path(path).read_text())
        class_names = list(meta["class_names"])
        split = meta.get("split", "train")
    except FileNotFoundError as exc:
        raise CorpusFormatError(f"missing corpus sidecar for {path}") from exc
    sketches: list[Sketch] = []
    off = 12
    try:
        for _ in range(count):
            (rec_len,) = _U32.unpack_from(data, off)
            off += 4
            rec = data[off : off + rec_len]
            if len(rec) != rec_len:
                raise CorpusFormatError(f"truncated corpus file: {path}")
            off += rec_len
            (idx,) = struct.unpack_from("<i", rec, 0)
            (npts,) = _U32.unpack_from(rec, 4)
            pts = []
            p_off = 8
            for _ in range(npts):
                dx, dy, pen = _POINT.unpack_from(rec, p_off)
                p_off += _POINT.size
                pts.append(Stroke3Point(dx, dy, pen))
            label = class_names[idx] if idx >= 0 else None
            sketches.append(Sketch(points=tuple(pts), label=label))
    except struct.error as exc:
        raise CorpusFormatError(f"truncated corpus file: {path}") from exc
    return SketchCorpus(sketches=sketches, class_names=class_names, split=split)


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def with_split(corpus: SketchCorpus, split: str) -> SketchCorpus:
    return SketchCorpus(sketches=list(corpus.sketches), class_names=list(corpus.class_names), split=split)


def relabel(sketch: Sketch, label: str | None) -> Sketch:
    return Sketch(points=sketch.points, label=label)


__all__ = [
    "Stroke3Point",
    "Sketch",
    "SketchCorpus",
    "ParseReport",
    "DegenerateSketchError",
    "CorpusFormatError",
    "parse_quickdraw_ndjson",
    "normalize",
    "is_normalized",
    "save_corpus",
    "load_corpus",
    "sketch_from_arrays",
    "with_split",
    "relabel",
]
