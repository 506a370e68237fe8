"""Stroke-to-primitive abstraction.

A dictionary of K fixed-length unit directions at 2*pi/K spacing quantizes
each stroke vector: the primitive with maximal cosine similarity is chosen,
and the stroke length maps to a repeat count by a ceiling ratio. Pen-up
displacements are abstracted with the same dictionary and flagged so
reconstruction can place disconnected strokes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .strokes import DegenerateSketchError, Sketch, sketch_from_arrays, normalize

DEFAULT_ORIENTATIONS = 36
DEFAULT_PRIMITIVE_LENGTH = 0.05


class ZeroStrokeError(ValueError):
    """Cosine similarity is undefined for a zero-length stroke vector."""


def _snap(value: float, tol: float = 1e-12) -> float:
    """Pin cardinal direction components to exact -1/0/1.

    cos(pi/2) evaluates to ~6e-17, which would make axis-aligned strokes
    compare unequal against their obvious primitive.
    """
    for exact in (-1.0, 0.0, 1.0):
        if abs(value - exact) <= tol:
            return exact
    return value


@dataclass(frozen=True)
class Primitive:
    id: int
    direction: tuple[float, float]
    length: float

    def __post_init__(self) -> None:
        norm = math.hypot(*self.direction)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"direction must be unit length, got norm {norm}")
        if self.length <= 0:
            raise ValueError("length must be positive")


@dataclass(frozen=True)
class PrimitiveDictionary:
    primitives: tuple[Primitive, ...]
    orientation_count: int
    primitive_length: float

    @cached_property
    def directions(self) -> np.ndarray:
        """(K, 2) float64 array of unit directions in id order."""
        return np.array([p.direction for p in self.primitives], dtype=np.float64)

    @cached_property
    def direction_norms(self) -> np.ndarray:
        return np.hypot(self.directions[:, 0], self.directions[:, 1])


@dataclass(frozen=True)
class Run:
    primitive_id: int
    count: int
    pen_up_move: bool

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("repeat count must be >= 1")


@dataclass(frozen=True)
class AbstractedSketch:
    runs: tuple[Run, ...]

    @property
    def pen_up_count(self) -> int:
        return sum(r.pen_up_move for r in self.runs)


def build_dictionary(
    orientation_count: int = DEFAULT_ORIENTATIONS,
    primitive_length: float = DEFAULT_PRIMITIVE_LENGTH,
) -> PrimitiveDictionary:
    if orientation_count < 4:
        raise ValueError("dictionary too coarse: need at least 4 orientations")
    if primitive_length <= 0:
        raise ValueError("primitive length must be positive")
    prims = []
    for j in range(orientation_count):
        angle = 2.0 * math.pi * j / orientation_count
        direction = (_snap(math.cos(angle)), _snap(math.sin(angle)))
        prims.append(Primitive(id=j, direction=direction, length=primitive_length))
    return PrimitiveDictionary(
        primitives=tuple(prims),
        orientation_count=orientation_count,
        primitive_length=primitive_length,
    )


def similarity(stroke: np.ndarray, primitive: Primitive) -> float:
    """Cosine of the angle between a stroke vector and a primitive direction."""
    stroke = np.asarray(stroke, dtype=np.float64)
    norm = float(np.hypot(stroke[0], stroke[1]))
    if norm == 0.0:
        raise ZeroStrokeError("zero stroke")
    d = primitive.direction
    return float((stroke[0] * d[0] + stroke[1] * d[1]) / (norm * math.hypot(d[0], d[1])))


_TIE_TOL = 1e-12


def map_stroke(stroke: np.ndarray, dictionary: PrimitiveDictionary) -> Primitive:
    """Most-similar primitive; ties go to the lowest id.

    A stroke exactly between two orientations is a true mathematical tie, but
    the two cosines land 1 ulp apart in float64, so any similarity within
    _TIE_TOL of the max counts as tied. Evaluates the same quotient as
    similarity() elementwise (not via a BLAS dot, whose fused rounding could
    disagree with the scalar path).
    """
    stroke = np.asarray(stroke, dtype=np.float64)
    norm = float(np.hypot(stroke[0], stroke[1]))
    if norm == 0.0:
        raise ZeroStrokeError("zero stroke")
    dirs = dictionary.directions
    sims = (dirs[:, 0] * stroke[0] + dirs[:, 1] * stroke[1]) / (
        norm * dictionary.direction_norms
    )
    winner = int(np.argmax(sims >= sims.max() - _TIE_TOL))
    return dictionary.primitives[winner]


def scale_factor(stroke: np.ndarray, primitive: Primitive) -> int:
    stroke = np.asarray(stroke, dtype=np.float64)
    norm = float(np.hypot(stroke[0], stroke[1]))
    if norm == 0.0:
        raise ZeroStrokeError("zero stroke")
    return max(1, math.ceil(norm / primitive.length))


def abstract_sketch(sketch: Sketch, dictionary: PrimitiveDictionary) -> AbstractedSketch:
    """Map every stroke vector of a normalized sketch to a primitive run.

    The first point's offset is the positional anchor, not a stroke, and is
    excluded. A vector whose predecessor point carries pen = 1 becomes a
    pen-up move. Zero-length offsets are dropped. One source stroke yields
    exactly one run; adjacent runs are never merged.
    """
    offsets = sketch.offsets()
    pens = sketch.pen_states()
    runs: list[Run] = []
    for k in range(1, len(offsets)):
        vec = offsets[k]
        if vec[0] == 0.0 and vec[1] == 0.0:
            continue
        prim = map_stroke(vec, dictionary)
        count = scale_factor(vec, prim)
        runs.append(Run(prim.id, count, pen_up_move=bool(pens[k - 1] == 1)))
    if not runs:
        raise DegenerateSketchError("degenerate geometry")
    return AbstractedSketch(runs=tuple(runs))


def expand_runs(abstracted: AbstractedSketch, dictionary: PrimitiveDictionary) -> np.ndarray:
    """(R, 2) array of quantized stroke vectors, one per run, unnormalized."""
    dirs = dictionary.directions
    k = dictionary.orientation_count
    out = np.empty((len(abstracted.runs), 2), dtype=np.float64)
    for i, run in enumerate(abstracted.runs):
        if not (0 <= run.primitive_id < k):
            raise ValueError(f"unknown primitive id {run.primitive_id}")
        out[i] = dirs[run.primitive_id] * (run.count * dictionary.primitive_length)
    return out


def reconstruct(
    abstracted: AbstractedSketch,
    dictionary: PrimitiveDictionary,
    renormalize: bool = True,
) -> Sketch:
    """Expand runs back into a stroke-3 sketch (lossy inverse of abstraction).

    The anchor point's pen flag and every point's pen flag are derived from
    the pen-up flags of the following run, which preserves the number of
    pen-up transitions exactly.
    """
    vectors = expand_runs(abstracted, dictionary)
    runs = abstracted.runs
    n = len(runs)
    offsets = np.zeros((n + 1, 2), dtype=np.float64)
    offsets[1:] = vectors
    pens = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        # point i precedes run i's vector; pen up there iff the move is in air
        if runs[i].pen_up_move:
            pens[i] = 1
    pens[n] = 1  # drawing terminates pen-up
    sketch = sketch_from_arrays(offsets, pens)
    return normalize(sketch) if renormalize else sketch


def angular_error(stroke: np.ndarray, primitive: Primitive) -> float:
    """Absolute angle in radians between a stroke and its primitive."""
    c = similarity(stroke, primitive)
    return float(math.acos(max(-1.0, min(1.0, c))))


__all__ = [
    "Primitive",
    "PrimitiveDictionary",
    "Run",
    "AbstractedSketch",
    "ZeroStrokeError",
    "DEFAULT_ORIENTATIONS",
    "DEFAULT_PRIMITIVE_LENGTH",
    "build_dictionary",
    "similarity",
    "map_stroke",
    "scale_factor",
    "abstract_sketch",
    "expand_runs",
    "reconstruct",
    "angular_error",
]
