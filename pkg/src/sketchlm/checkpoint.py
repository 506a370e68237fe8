"""Versioned binary checkpoints.

Layout: 4 magic bytes, u32 format version, u32 header length, UTF-8 JSON
header, then raw little-endian tensor payloads in header-manifest order
(parameters first, then Adam first/second moments per parameter when
optimizer state is present). Vocabulary and dictionary parameters ride in the
header so inference needs no side files. Reload reproduces forward outputs
bit-identically at equal precision because tensor bytes round-trip raw.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .model import ModelConfig, ModelParameters
from .optim import AdamState
from .primitives import PrimitiveDictionary, build_dictionary
from .tokenizer import Vocabulary

CHECKPOINT_MAGIC = b"SKCK"
CHECKPOINT_VERSION = 1

_U32 = struct.Struct("<I")


class CheckpointFormatError(ValueError):
    """Checkpoint file is corrupt or has an unexpected version."""


@dataclass
class Checkpoint:
    params: ModelParameters
    orientation_count: int
    primitive_length: float
    class_names: list[str] = field(default_factory=list)
    optimizer: AdamState | None = None
    epoch: int = 0
    best_metric: float | None = None
    format_version: int = CHECKPOINT_VERSION

    @property
    def config(self) -> ModelConfig:
        return self.params.config

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(self.orientation_count)

    def dictionary(self) -> PrimitiveDictionary:
        return build_dictionary(self.orientation_count, self.primitive_length)


def clone_params(params: ModelParameters) -> ModelParameters:
    tensors = {
        name: Tensor(t.data.copy(), requires_grad=t.requires_grad)
        for name, t in params.tensors.items()
    }
    return ModelParameters(config=params.config, tensors=tensors)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    dtype = next(iter(ckpt.params.tensors.values())).data.dtype
    manifest = [
        {"name": name, "shape": list(t.shape)} for name, t in ckpt.params.tensors.items()
    ]
    opt = ckpt.optimizer
    header = {
        "format_version": ckpt.format_version,
        "model_config": asdict(ckpt.config),
        "dictionary": {
            "orientation_count": ckpt.orientation_count,
            "primitive_length": ckpt.primitive_length,
        },
        "vocab_size": ckpt.orientation_count + 4,
        "class_names": ckpt.class_names,
        "epoch": ckpt.epoch,
        "best_metric": ckpt.best_metric,
        "dtype": dtype.name,
        "params": manifest,
        "optimizer": None
        if opt is None
        else {
            "lr": opt.lr,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
            "step": opt.step,
            "has_moments": bool(opt.m),
        },
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(_U32.pack(ckpt.format_version))
    buf.write(_U32.pack(len(header_bytes)))
    buf.write(header_bytes)
    for name, t in ckpt.params.tensors.items():
        buf.write(np.ascontiguousarray(t.data).tobytes())
    if opt is not None and opt.m:
        for name in ckpt.params.tensors:
            buf.write(np.ascontiguousarray(opt.m[name]).tobytes())
            buf.write(np.ascontiguousarray(opt.v[name]).tobytes())
    path.write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path, expect_config: ModelConfig | None = None) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"not a checkpoint file (bad magic): {path}")
    (version,) = _U32.unpack_from(data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            f"checkpoint version mismatch: file has {version}, expected {CHECKPOINT_VERSION}"
        )
    (header_len,) = _U32.unpack_from(data, 8)
    try:
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"corrupt checkpoint header: {path}") from exc
    config = ModelConfig(**header["model_config"])
    if expect_config is not None:
        for name, expected in asdict(expect_config).items():
            actual = getattr(config, name)
            if actual != expected:
                raise CheckpointFormatError(
                    f"checkpoint config mismatch on {name!r}: file has {actual}, expected {expected}"
                )
    dtype = np.dtype(header["dtype"])

    def read_array(offset: int, shape: tuple[int, ...]) -> tuple[np.ndarray, int]:
        nbytes = int(np.prod(shape)) * dtype.itemsize
        chunk = data[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointFormatError(f"truncated checkpoint payload: {path}")
        return np.frombuffer(chunk, dtype=dtype).reshape(shape).copy(), offset + nbytes

    off = 12 + header_len
    tensors: dict[str, Tensor] = {}
    for entry in header["params"]:
        arr, off = read_array(off, tuple(entry["shape"]))
        tensors[entry["name"]] = Tensor(arr, requires_grad=True)
    params = ModelParameters(config=config, tensors=tensors)
    optimizer = None
    opt_header = header.get("optimizer")
    if opt_header is not None:
        optimizer = AdamState(
            lr=opt_header["lr"],
            beta1=opt_header["beta1"],
            beta2=opt_header["beta2"],
            eps=opt_header["eps"],
            step=opt_header["step"],
        )
        if opt_header.get("has_moments"):
            for entry in header["params"]:
                shape = tuple(entry["shape"])
                optimizer.m[entry["name"]], off = read_array(off, shape)
                optimizer.v[entry["name"]], off = read_array(off, shape)
    return Checkpoint(
        params=params,
        orientation_count=header["dictionary"]["orientation_count"],
        primitive_length=header["dictionary"]["primitive_length"],
        class_names=list(header.get("class_names", [])),
        optimizer=optimizer,
        epoch=header.get("epoch", 0),
        best_metric=header.get("best_metric"),
        format_version=version,
    )


__all__ = [
    "Checkpoint",
    "CheckpointFormatError",
    "save_checkpoint",
    "load_checkpoint",
    "clone_params",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
]
