"""Decoder-only transformer over primitive tokens.

Pre-norm blocks (norm, attention, residual; norm, MLP, residual) with learned
absolute positions and a final layer norm. Future positions are excluded with
an additive mask of -1e9 applied before the softmax: exponentiation then
underflows those weights to exactly zero, which realizes the intended
causality. An elementwise multiplicative mask on the scores would instead turn
blocked entries into exp(0) = 1 and leak probability mass forward.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .tokenizer import TokenSequence, Vocabulary

MASK_NEG = -1e9


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 4
    heads: int = 4
    hidden: int = 128
    max_seq_len: int = 512
    vocab_size: int = 40
    num_classes: int | None = None
    mlp_multiplier: int = 4
    tie_lm_head: bool = True
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.heads < 1 or self.hidden < 1:
            raise ValueError("heads and hidden must be positive")
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if self.max_seq_len < 3:
            raise ValueError("max_seq_len must be at least 3")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


# the paper's best-reported network shape, and the desk-scale default
PRESETS = {
    "desk": dict(layers=4, heads=4, hidden=128),
    "paper-best": dict(layers=8, heads=8, hidden=512),
}


@dataclass
class ModelParameters:
    config: ModelConfig
    tensors: dict[str, Tensor]

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def trainable(self) -> dict[str, Tensor]:
        return self.tensors

    def count(self) -> int:
        return sum(int(np.prod(t.shape)) for t in self.tensors.values())


@dataclass(frozen=True)
class CausalMask:
    """Binary attend/block matrix per sequence: (i, j) allows j <= i, j non-PAD."""

    allowed: np.ndarray  # [B, T, T] uint8
    lengths: np.ndarray  # [B]

    def additive(self, dtype) -> np.ndarray:
        return np.where(self.allowed[:, None, :, :] != 0, dtype.type(0.0), dtype.type(MASK_NEG))


def causal_mask(lengths: np.ndarray, seq_len: int) -> CausalMask:
    lengths = np.asarray(lengths, dtype=np.int64)
    tri = np.tril(np.ones((seq_len, seq_len), dtype=np.uint8))
    key_ok = (np.arange(seq_len)[None, :] < lengths[:, None]).astype(np.uint8)
    allowed = tri[None, :, :] * key_ok[:, None, :]
    return CausalMask(allowed=allowed, lengths=lengths)


def init_parameters(
    config: ModelConfig, seed: int = 0, dtype=np.float32
) -> ModelParameters:
    """GPT-2 style init: normal(0, 0.02) matrices, zero biases, unit norm gains.

    The classification head starts at zero so an untrained head yields uniform
    class probabilities.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0x534B4C4D, seed]))
    tensors: dict[str, Tensor] = {}

    def normal(name: str, shape: tuple[int, ...]) -> None:
        tensors[name] = Tensor(rng.normal(0.0, 0.02, size=shape).astype(dtype), requires_grad=True)

    def zeros(name: str, shape: tuple[int, ...]) -> None:
        tensors[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

    def ones(name: str, shape: tuple[int, ...]) -> None:
        tensors[name] = Tensor(np.ones(shape, dtype=dtype), requires_grad=True)

    h, m = config.hidden, config.mlp_multiplier * config.hidden
    normal("tok_emb", (config.vocab_size, h))
    normal("pos_emb", (config.max_seq_len, h))
    for i in range(config.layers):
        p = f"layers.{i}"
        ones(f"{p}.ln1.gain", (h,))
        zeros(f"{p}.ln1.bias", (h,))
        for proj in ("wq", "wk", "wv", "wo"):
            normal(f"{p}.attn.{proj}", (h, h))
        for proj in ("bq", "bk", "bv", "bo"):
            zeros(f"{p}.attn.{proj}", (h,))
        ones(f"{p}.ln2.gain", (h,))
        zeros(f"{p}.ln2.bias", (h,))
        normal(f"{p}.mlp.w1", (h, m))
        zeros(f"{p}.mlp.b1", (m,))
        normal(f"{p}.mlp.w2", (m, h))
        zeros(f"{p}.mlp.b2", (h,))
    ones("final_ln.gain", (h,))
    zeros("final_ln.bias", (h,))
    if not config.tie_lm_head:
        normal("lm_head.w", (h, config.vocab_size))
    if config.num_classes is not None:
        zeros("cls_head.w", (h, config.num_classes))
        zeros("cls_head.b", (config.num_classes,))
    return ModelParameters(config=config, tensors=tensors)


def add_classification_head(params: ModelParameters, num_classes: int) -> ModelParameters:
    """Attach a zero-initialized head for num_classes, replacing any existing one."""
    dtype = params["tok_emb"].dtype
    tensors = dict(params.tensors)
    tensors["cls_head.w"] = Tensor(np.zeros((params.config.hidden, num_classes), dtype=dtype), requires_grad=True)
    tensors["cls_head.b"] = Tensor(np.zeros((num_classes,), dtype=dtype), requires_grad=True)
    return ModelParameters(config=replace(params.config, num_classes=num_classes), tensors=tensors)


def _linear(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    out = ag.matmul(x, w)
    return out if b is None else ag.add(out, b)


def masked_attention(
    x: Tensor,
    params: ModelParameters,
    layer: int,
    mask: CausalMask,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Multi-head scaled dot-product attention with causal and PAD masking.

    x is [B, T, H] (a [T, H] input is treated as a batch of one). Heads are
    split by reshape, attended independently, concatenated back, and projected.
    """
    squeeze = x.data.ndim == 2
    if squeeze:
        x = ag.reshape(x, (1,) + x.shape)
    cfg = params.config
    b, t, h = x.shape
    if t > cfg.max_seq_len:
        raise ValueError(f"sequence length {t} exceeds max_seq_len {cfg.max_seq_len}")
    a, dk = cfg.heads, cfg.head_dim
    p = f"layers.{layer}"
    drop = cfg.dropout if training else 0.0

    def heads(tensor: Tensor) -> Tensor:
        return ag.transpose(ag.reshape(tensor, (b, t, a, dk)), (0, 2, 1, 3))

    q = heads(_linear(x, params[f"{p}.attn.wq"], params[f"{p}.attn.bq"]))
    k = heads(_linear(x, params[f"{p}.attn.wk"], params[f"{p}.attn.bk"]))
    v = heads(_linear(x, params[f"{p}.attn.wv"], params[f"{p}.attn.bv"]))
    scores = ag.scale(ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dk))
    scores = ag.add(scores, Tensor(mask.additive(x.data.dtype)))
    weights = ag.softmax(scores, axis=-1)
    if drop > 0.0:
        weights = ag.dropout(weights, drop, rng)
    ctx = ag.matmul(weights, v)
    merged = ag.reshape(ag.transpose(ctx, (0, 2, 1, 3)), (b, t, h))
    out = _linear(merged, params[f"{p}.attn.wo"], params[f"{p}.attn.bo"])
    if drop > 0.0:
        out = ag.dropout(out, drop, rng)
    return ag.reshape(out, (t, h)) if squeeze else out


def _block(
    x: Tensor,
    params: ModelParameters,
    layer: int,
    mask: CausalMask,
    training: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    cfg = params.config
    p = f"layers.{layer}"
    drop = cfg.dropout if training else 0.0
    normed = ag.layer_norm(x, params[f"{p}.ln1.gain"], params[f"{p}.ln1.bias"])
    x = ag.add(x, masked_attention(normed, params, layer, mask, training, rng))
    normed = ag.layer_norm(x, params[f"{p}.ln2.gain"], params[f"{p}.ln2.bias"])
    hidden = ag.gelu(_linear(normed, params[f"{p}.mlp.w1"], params[f"{p}.mlp.b1"]))
    out = _linear(hidden, params[f"{p}.mlp.w2"], params[f"{p}.mlp.b2"])
    if drop > 0.0:
        out = ag.dropout(out, drop, rng)
    return ag.add(x, out)


def backbone(
    params: ModelParameters,
    ids: np.ndarray,
    lengths: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Embed, run all blocks, and apply the final norm: [B, T] -> [B, T, H]."""
    cfg = params.config
    ids = np.asarray(ids)
    b, t = ids.shape
    if t > cfg.max_seq_len:
        raise ValueError(f"sequence length {t} exceeds max_seq_len {cfg.max_seq_len}")
    if ids.max() >= cfg.vocab_size:
        raise ValueError(
            f"token id {int(ids.max())} outside model vocabulary of {cfg.vocab_size}"
        )
    mask = causal_mask(lengths, t)
    x = ag.add(ag.embedding(params["tok_emb"], ids), ag.slice_rows(params["pos_emb"], t))
    drop = cfg.dropout if training else 0.0
    if drop > 0.0:
        x = ag.dropout(x, drop, rng)
    for layer in range(cfg.layers):
        x = _block(x, params, layer, mask, training, rng)
    return ag.layer_norm(x, params["final_ln.gain"], params["final_ln.bias"])


def lm_logits(params: ModelParameters, hidden: Tensor) -> Tensor:
    if params.config.tie_lm_head:
        return ag.matmul(hidden, ag.transpose(params["tok_emb"], (1, 0)))
    return ag.matmul(hidden, params["lm_head.w"])


def forward_lm_batch(
    params: ModelParameters,
    ids: np.ndarray,
    lengths: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    return lm_logits(params, backbone(params, ids, lengths, training, rng))


def forward_lm(tokens: TokenSequence, params: ModelParameters) -> np.ndarray:
    """Next-token logits for one sequence: [T, vocab_size], deterministic."""
    ids = np.asarray(tokens.ids, dtype=np.int64)[None, :]
    lengths = np.asarray([tokens.attention_length])
    out = forward_lm_batch(params, ids, lengths)
    return out.data[0]


def forward_classify_batch(
    params: ModelParameters,
    ids: np.ndarray,
    lengths: np.ndarray,
    eos_positions: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    if params.config.num_classes is None:
        raise ValueError("model has no classification head configured")
    hidden = backbone(params, ids, lengths, training, rng)
    pooled = ag.take_rows(hidden, eos_positions)
    return _linear(pooled, params["cls_head.w"], params["cls_head.b"])


def forward_classify(tokens: TokenSequence, params: ModelParameters, vocab: Vocabulary) -> np.ndarray:
    """Class logits read at the EOS position: [num_classes]."""
    try:
        eos_pos = tokens.ids.index(vocab.eos)
    except ValueError:
        raise ValueError("sequence contains no EOS token") from None
    ids = np.asarray(tokens.ids, dtype=np.int64)[None, :]
    out = forward_classify_batch(
        params,
        ids,
        np.asarray([tokens.attention_length]),
        np.asarray([eos_pos]),
    )
    return out.data[0]


def count_parameters(config: ModelConfig) -> int:
    h, m = config.hidden, config.mlp_multiplier * config.hidden
    total = config.vocab_size * h + config.max_seq_len * h
    per_layer = 2 * h + 4 * h * h + 4 * h + 2 * h + (h * m + m) + (m * h + h)
    total += config.layers * per_layer
    total += 2 * h
    if not config.tie_lm_head:
        total += h * config.vocab_size
    if config.num_classes is not None:
        total += h * config.num_classes + config.num_classes
    return total


__all__ = [
    "ModelConfig",
    "ModelParameters",
    "CausalMask",
    "PRESETS",
    "causal_mask",
    "init_parameters",
    "add_classification_head",
    "masked_attention",
    "backbone",
    "forward_lm",
    "forward_lm_batch",
    "forward_classify",
    "forward_classify_batch",
    "lm_logits",
    "count_parameters",
]
