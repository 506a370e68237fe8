"""Deterministic synthetic sketches.

Shape builders emit absolute-coordinate strokes which are jittered, converted
to stroke-3, and normalized. Fixed (shape, jitter, seed) always reproduces the
same sketch, so corpora built here stand in for downloaded data in tests and
desk-scale experiments.
"""

from __future__ import annotations

import math
import zlib

import numpy as np

from .strokes import Sketch, SketchCorpus, normalize, sketch_from_arrays


def _polygon(n: int, phase: float = 0.0) -> list[np.ndarray]:
    pts = [
        (math.cos(2 * math.pi * k / n + phase), math.sin(2 * math.pi * k / n + phase))
        for k in range(n)
    ]
    pts.append(pts[0])
    return [np.array(pts, dtype=np.float64)]


def _square() -> list[np.ndarray]:
    return [np.array([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)], dtype=np.float64)]


def _triangle() -> list[np.ndarray]:
    return [np.array([(0, 0), (1, 0), (0.5, 0.9), (0, 0)], dtype=np.float64)]


def _circle() -> list[np.ndarray]:
    return _polygon(16)


def _zigzag() -> list[np.ndarray]:
    return [np.array([(0, 0), (0.25, 1), (0.5, 0), (0.75, 1), (1, 0)], dtype=np.float64)]


def _star() -> list[np.ndarray]:
    pts = []
    for k in range(10):
        r = 1.0 if k % 2 == 0 else 0.45
        a = math.pi / 2 + k * math.pi / 5
        pts.append((r * math.cos(a), r * math.sin(a)))
    pts.append(pts[0])
    return [np.array(pts, dtype=np.float64)]


def _cross() -> list[np.ndarray]:
    return [
        np.array([(0, 0.5), (1, 0.5)], dtype=np.float64),
        np.array([(0.5, 0), (0.5, 1)], dtype=np.float64),
    ]


def _arrow() -> list[np.ndarray]:
    return [
        np.array([(0, 0.5), (1, 0.5)], dtype=np.float64),
        np.array([(0.7, 0.8), (1, 0.5), (0.7, 0.2)], dtype=np.float64),
    ]


def _staircase() -> list[np.ndarray]:
    pts = [(0.0, 0.0)]
    x, y = 0.0, 0.0
    for _ in range(4):
        x += 0.25
        pts.append((x, y))
        y += 0.25
        pts.append((x, y))
    return [np.array(pts, dtype=np.float64)]


def _hourglass() -> list[np.ndarray]:
    return [np.array([(0, 0), (1, 0), (0, 1), (1, 1), (0, 0)], dtype=np.float64)]


def _house() -> list[np.ndarray]:
    return [
        np.array(
            [(0, 0), (1, 0), (1, 0.7), (0.5, 1.1), (0, 0.7), (0, 0), (1, 0)],
            dtype=np.float64,
        )
    ]


def _envelope() -> list[np.ndarray]:
    return [
        np.array([(0, 0), (1, 0), (1, 0.6), (0, 0.6), (0, 0)], dtype=np.float64),
        np.array([(0, 0.6), (0.5, 0.2), (1, 0.6)], dtype=np.float64),
    ]


def _diamond() -> list[np.ndarray]:
    return [np.array([(0.5, 0), (1, 0.5), (0.5, 1), (0, 0.5), (0.5, 0)], dtype=np.float64)]


def _tee() -> list[np.ndarray]:
    return [
        np.array([(0, 1), (1, 1)], dtype=np.float64),
        np.array([(0.5, 1), (0.5, 0)], dtype=np.float64),
    ]


def _lightning() -> list[np.ndarray]:
    return [np.array([(0.6, 1), (0.2, 0.55), (0.55, 0.45), (0.3, 0)], dtype=np.float64)]


def _waves() -> list[np.ndarray]:
    xs = np.linspace(0.0, 1.0, 13)
    ys = 0.2 * np.sin(xs * 2 * math.pi * 2)
    return [np.stack([xs, ys], axis=1)]


SHAPE_BUILDERS = {
    "square": _square,
    "triangle": _triangle,
    "circle-approximation": _circle,
    "circle": _circle,
    "zigzag": _zigzag,
    "star": _star,
    "cross": _cross,
    "arrow": _arrow,
    "staircase": _staircase,
    "hourglass": _hourglass,
    "house": _house,
    "envelope": _envelope,
    "diamond": _diamond,
    "tee": _tee,
    "lightning": _lightning,
    "waves": _waves,
}

# 15 distinguishable classes for multi-class fixtures ("circle" aliases
# "circle-approximation", so list it once).
CLASS_NAMES = [
    "square",
    "triangle",
    "circle",
    "zigzag",
    "star",
    "cross",
    "arrow",
    "staircase",
    "hourglass",
    "house",
    "envelope",
    "diamond",
    "tee",
    "lightning",
    "waves",
]


def synthesize(
    shape: str,
    jitter: float = 0.0,
    seed: int = 0,
    rotation: float = 0.0,
    label: str | None = None,
) -> Sketch:
    """Build one normalized sketch of the named shape.

    Deterministic for fixed (shape, jitter, seed, rotation). Jitter is the
    standard deviation of Gaussian noise added to vertices, in units of the
    shape's own scale.
    """
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    try:
        builder = SHAPE_BUILDERS[shape]
    except KeyError:
        raise ValueError(f"unknown shape kind {shape!r}") from None
    # crc32 keeps the stream independent of Python's per-process hash seed
    rng = np.random.default_rng(np.random.SeedSequence([zlib.crc32(shape.encode()), seed]))
    strokes = [s.copy() for s in builder()]
    if rotation != 0.0:
        c, s = math.cos(rotation), math.sin(rotation)
        rot = np.array([[c, -s], [s, c]])
        strokes = [pts @ rot.T for pts in strokes]
    if jitter > 0:
        strokes = [pts + rng.normal(0.0, jitter, size=pts.shape) for pts in strokes]
    offsets = []
    pens = []
    prev = None
    for pts in strokes:
        for i, p in enumerate(pts):
            if prev is None:
                offsets.append((0.0, 0.0))
            else:
                offsets.append((p[0] - prev[0], p[1] - prev[1]))
            prev = p
            pens.append(1 if i == len(pts) - 1 else 0)
    sketch = sketch_from_arrays(np.array(offsets), np.array(pens), label=label or shape)
    return normalize(sketch)


def synthetic_corpus(
    classes: list[str],
    n_per_class: int,
    seed: int = 0,
    jitter: float = 0.04,
    rotation_jitter: float = 0.18,
    split: str = "train",
) -> SketchCorpus:
    """Labeled corpus of jittered, randomly rotated shape instances.

    Per-sample seeds derive from (seed, class index, sample index), so the
    corpus is reproducible and disjoint seeds give disjoint corpora.
    """
    unknown = [c for c in classes if c not in SHAPE_BUILDERS]
    if unknown:
        raise ValueError(f"unknown shape kinds: {unknown}")
    sketches = []
    for ci, cls in enumerate(classes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, ci]))
        for si in range(n_per_class):
            rot = float(rng.normal(0.0, rotation_jitter))
            sample_seed = int(rng.integers(0, 2**31 - 1))
            sketches.append(
                synthesize(cls, jitter=jitter, seed=sample_seed, rotation=rot, label=cls)
            )
    return SketchCorpus(sketches=sketches, class_names=list(classes), split=split)


__all__ = ["SHAPE_BUILDERS", "CLASS_NAMES", "synthesize", "synthetic_corpus"]
