"""JSON-over-HTTP inference: generation, completion, classification.

Checkpoints are loaded once at app construction and shared read-only; each
request owns its RNG stream, so seeded requests are reproducible byte for
byte regardless of concurrency. Stroke payloads arrive in raw coordinates and
the server normalizes, so clients never reimplement normalization.
"""

from __future__ import annotations

import logging
import secrets
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .checkpoint import CHECKPOINT_VERSION, Checkpoint, load_checkpoint
from .model import forward_classify
from .primitives import AbstractedSketch, reconstruct
from .render import DecodeRepairs, _tolerant_runs, runs_to_polylines, to_svg
from .sampling import SamplerConfig, _prefix_token_ids, complete
from .strokes import DegenerateSketchError, Sketch, normalize, sketch_from_arrays
from .training import tokenize_sketch

log = logging.getLogger(__name__)


@dataclass
class ServiceConfig:
    completion_checkpoints: dict[str, str]
    classifier_checkpoint: str | None = None
    max_num_samples: int = 5
    max_prefix_points: int = 2000
    cors_origins: list[str] = dataclass_field(default_factory=list)
    svg_canvas_px: int = 256
    host: str = "127.0.0.1"
    port: int = 8470
    static_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.completion_checkpoints and self.classifier_checkpoint is None:
            raise ValueError("configure at least one checkpoint")
        if self.max_num_samples < 1 or self.max_prefix_points < 1:
            raise ValueError("request limits must be positive")


class CompleteRequest(BaseModel):
    strokes: list[list[float]] = Field(default_factory=list)
    num_samples: int = 1
    temperature: float = 1.0
    seed: int | None = None
    # class is a Python keyword, hence the alias
    class_name: str = Field(alias="class")

    model_config = {"populate_by_name": True}


class GenerateRequest(BaseModel):
    num_samples: int = 1
    temperature: float = 1.0
    seed: int | None = None
    class_name: str = Field(alias="class")

    model_config = {"populate_by_name": True}


class ClassifyRequest(BaseModel):
    strokes: list[list[float]]


def _strokes_to_sketch(strokes: list[list[float]]) -> Sketch:
    if not strokes:
        raise HTTPException(422, detail="strokes must be a non-empty list of [dx, dy, pen]")
    offsets = []
    pens = []
    for i, triple in enumerate(strokes):
        if len(triple) != 3:
            raise HTTPException(422, detail=f"stroke {i} is not a [dx, dy, pen] triple")
        dx, dy, pen = triple
        if not (np.isfinite(dx) and np.isfinite(dy)):
            raise HTTPException(422, detail=f"stroke {i} has non-finite coordinates")
        if pen not in (0, 1):
            raise HTTPException(422, detail=f"stroke {i} pen state must be 0 or 1")
        offsets.append((float(dx), float(dy)))
        pens.append(int(pen))
    pens[-1] = 1  # drawing terminates pen-up
    return sketch_from_arrays(np.array(offsets), np.array(pens))


def _sketch_to_wire(sketch: Sketch) -> list[list[float]]:
    return [[p.dx, p.dy, p.pen] for p in sketch.points]


class _Runtime:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.completers: dict[str, Checkpoint] = {}
        self.classifier: Checkpoint | None = None
        self.load_errors: dict[str, str] = {}
        for name, path in config.completion_checkpoints.items():
            try:
                self.completers[name] = load_checkpoint(path)
            except (OSError, ValueError) as exc:
                self.load_errors[name] = str(exc)
                log.error("failed to load checkpoint for %s: %s", name, exc)
        if config.classifier_checkpoint is not None:
            try:
                self.classifier = load_checkpoint(config.classifier_checkpoint)
            except (OSError, ValueError) as exc:
                self.load_errors["__classifier__"] = str(exc)
                log.error("failed to load classifier: %s", exc)

    @property
    def healthy(self) -> bool:
        return not self.load_errors


def create_app(config: ServiceConfig) -> FastAPI:
    runtime = _Runtime(config)
    app = FastAPI(title="sketchlm", version=__version__)
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=config.cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    def completer_for(class_name: str) -> Checkpoint:
        if class_name not in config.completion_checkpoints:
            raise HTTPException(404, detail=f"unknown class {class_name!r}")
        ckpt = runtime.completers.get(class_name)
        if ckpt is None:
            raise HTTPException(503, detail=f"checkpoint for {class_name!r} not loaded")
        return ckpt

    def run_completion(
        class_name: str,
        strokes: list[list[float]],
        num_samples: int,
        temperature: float,
        seed: int | None,
    ) -> JSONResponse:
        ckpt = completer_for(class_name)
        if num_samples < 1 or num_samples > config.max_num_samples:
            raise HTTPException(
                422,
                detail=f"num_samples {num_samples} exceeds limit max_num_samples={config.max_num_samples}",
            )
        if temperature <= 0:
            raise HTTPException(422, detail="temperature must be > 0")
        if len(strokes) > config.max_prefix_points:
            raise HTTPException(
                422,
                detail=f"prefix of {len(strokes)} points exceeds limit max_prefix_points={config.max_prefix_points}",
            )
        prefix_sketch = None
        if strokes:
            try:
                prefix_sketch = normalize(_strokes_to_sketch(strokes))
            except DegenerateSketchError:
                raise HTTPException(422, detail="degenerate geometry") from None
        effective_seed = seed if seed is not None else secrets.randbelow(2**31)
        sampler = SamplerConfig(
            temperature=temperature,
            max_new_tokens=ckpt.config.max_seq_len,
            seed=effective_seed,
            num_samples=num_samples,
        )
        try:
            result = complete(ckpt, prefix_sketch, sampler)
        except (ValueError, DegenerateSketchError) as exc:
            raise HTTPException(422, detail=str(exc)) from None
        vocab = ckpt.vocabulary()
        dictionary = ckpt.dictionary()
        completions = []
        prefix_token_count = 0
        if prefix_sketch is not None:
            prefix_token_count = len(_prefix_token_ids(ckpt, prefix_sketch, vocab))
        for ids, stop in zip(result.sequences, result.stop_reasons):
            runs = _tolerant_runs(ids, vocab, repairs=DecodeRepairs())
            if runs:
                sketch = reconstruct(AbstractedSketch(runs=tuple(runs)), dictionary)
                wire = _sketch_to_wire(sketch)
            else:
                wire = []
            svg = to_svg(runs_to_polylines(runs, dictionary), canvas_px=config.svg_canvas_px)
            completions.append({"strokes": wire, "svg": svg, "stop_reason": stop})
        return JSONResponse(
            {
                "completions": completions,
                "prefix_token_count": prefix_token_count,
                "seed": effective_seed,
            }
        )

    @app.post("/v1/complete")
    def v1_complete(req: CompleteRequest):
        return run_completion(req.class_name, req.strokes, req.num_samples, req.temperature, req.seed)

    @app.post("/v1/generate")
    def v1_generate(req: GenerateRequest):
        return run_completion(req.class_name, [], req.num_samples, req.temperature, req.seed)

    @app.post("/v1/classify")
    def v1_classify(req: ClassifyRequest):
        if runtime.classifier is None:
            raise HTTPException(503, detail="no classifier checkpoint loaded")
        ckpt = runtime.classifier
        try:
            sketch = _strokes_to_sketch(req.strokes)
            seq, _ = tokenize_sketch(
                sketch, ckpt.dictionary(), ckpt.vocabulary(), ckpt.config.max_seq_len
            )
        except DegenerateSketchError:
            raise HTTPException(422, detail="degenerate geometry") from None
        logits = forward_classify(seq, ckpt.params, ckpt.vocabulary())
        z = logits - logits.max()
        probs = np.exp(z)
        probs /= probs.sum()
        k = min(5, len(ckpt.class_names))
        order = np.argsort(-probs, kind="stable")[:k]
        return JSONResponse(
            {
                "topk": [
                    {"class": ckpt.class_names[i], "probability": float(probs[i])}
                    for i in order
                ],
                "k": k,
            }
        )

    @app.get("/v1/health")
    def v1_health():
        body = {
            "status": "ok" if runtime.healthy else "degraded",
            "loaded_checkpoints": sorted(runtime.completers)
            + (["__classifier__"] if runtime.classifier else []),
            "versions": {"checkpoint_format": CHECKPOINT_VERSION, "sketchlm": __version__},
        }
        return JSONResponse(body, status_code=200 if runtime.healthy else 503)

    if config.static_dir and Path(config.static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="ui")
    return app


__all__ = ["ServiceConfig", "create_app"]
