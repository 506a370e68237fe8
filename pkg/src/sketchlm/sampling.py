"""Temperature-scaled autoregressive generation and prefix completion.

Sampling draws from softmax(logits / t) with BOS and PAD masked out, so the
most-likely token is invariant under any t > 0 and higher temperatures flatten
the distribution. Structural violations in sampled sequences are flagged, not
blocked: constraining the chain would distort the sampled distribution, and
the renderer's tolerant decoder repairs them downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .model import forward_lm_batch
from .strokes import Sketch
from .tokenizer import TokenSequence, TokenError, Vocabulary, decode, sequence_from_ids


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 1.0
    max_new_tokens: int = 256
    seed: int = 0
    num_samples: int = 1
    top_k: int | None = None  # off by default: pure temperature sampling
    top_p: float | None = None

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.top_p is not None and not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")


# Fig-4-style sweep range for the temperature study
TEMPERATURE_SWEEP = (0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 2.0)


@dataclass
class GenerationResult:
    sequences: list[tuple[int, ...]]
    stop_reasons: list[str]  # "eos" | "length"
    seeds: list[int]
    entropies: list[list[float]] = field(default_factory=list)
    invalid: list[bool] = field(default_factory=list)


def sample_next(
    logits: np.ndarray,
    temperature: float,
    rng: np.random.Generator,
    vocab: Vocabulary,
    top_k: int | None = None,
    top_p: float | None = None,
) -> int:
    """Draw one token id from softmax(logits / t); BOS and PAD are never drawn."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    masked = logits.copy()
    masked[vocab.bos] = -np.inf
    masked[vocab.pad] = -np.inf
    if top_k is not None and 0 < top_k < masked.size:
        cutoff = np.sort(masked)[-top_k]
        masked[masked < cutoff] = -np.inf
    z = masked / temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    if top_p is not None and top_p < 1.0:
        order = np.argsort(-p, kind="stable")
        cumulative = np.cumsum(p[order])
        keep = order[: int(np.searchsorted(cumulative, top_p, side="left")) + 1]
        nucleus = np.zeros_like(p)
        nucleus[keep] = p[keep]
        p = nucleus / nucleus.sum()
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(p), u, side="right"), p.size - 1))


def distribution_entropy(logits: np.ndarray, temperature: float, vocab: Vocabulary) -> float:
    """Shannon entropy (nats) of the masked sampling distribution at t."""
    logits = np.asarray(logits, dtype=np.float64).copy()
    logits[vocab.bos] = -np.inf
    logits[vocab.pad] = -np.inf
    z = logits / temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def _sample_one(
    checkpoint: Checkpoint,
    prefix_ids: tuple[int, ...],
    sampler: SamplerConfig,
    seed: int,
    vocab: Vocabulary,
) -> tuple[tuple[int, ...], str, list[float]]:
    rng = np.random.default_rng(seed)
    params = checkpoint.params
    ids = list(prefix_ids)
    limit = min(
        len(prefix_ids) + sampler.max_new_tokens, checkpoint.config.max_seq_len
    )
    entropies: list[float] = []
    stop = "length"
    while len(ids) < limit:
        arr = np.asarray(ids, dtype=np.int64)[None, :]
        logits = forward_lm_batch(params, arr, np.asarray([len(ids)])).data[0, -1]
        entropies.append(distribution_entropy(logits, sampler.temperature, vocab))
        tok = sample_next(logits, sampler.temperature, rng, vocab, sampler.top_k, sampler.top_p)
        ids.append(tok)
        if tok == vocab.eos:
            stop = "eos"
            break
    return tuple(ids), stop, entropies


def _structurally_valid(ids: tuple[int, ...], vocab: Vocabulary) -> bool:
    try:
        decode(sequence_from_ids(ids, vocab), vocab)
        return True
    except TokenError:
        return False


def complete(
    checkpoint: Checkpoint,
    prefix: Sketch | TokenSequence | None,
    sampler: SamplerConfig,
) -> GenerationResult:
    """Freeze the prefix (EOS stripped) and sample continuations.

    An empty prefix reduces to generation from scratch. Each of num_samples
    sequences draws from an independent seeded stream, so results are pure
    functions of (checkpoint, sampler, prefix).
    """
    vocab = checkpoint.vocabulary()
    prefix_ids = _prefix_token_ids(checkpoint, prefix, vocab)
    if len(prefix_ids) >= checkpoint.config.max_seq_len:
        raise ValueError(
            f"prefix of {len(prefix_ids)} tokens is already at the model's "
            f"context limit {checkpoint.config.max_seq_len}"
        )
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(sampler.seed).spawn(sampler.num_samples)]
    result = GenerationResult(sequences=[], stop_reasons=[], seeds=seeds)
    for seed in seeds:
        ids, stop, entropies = _sample_one(checkpoint, prefix_ids, sampler, seed, vocab)
        result.sequences.append(ids)
        result.stop_reasons.append(stop)
        result.entropies.append(entropies)
        result.invalid.append(not _structurally_valid(ids, vocab))
    return result


def generate(checkpoint: Checkpoint, sampler: SamplerConfig) -> GenerationResult:
    """Sample num_samples sketches from scratch (completion of the empty prefix)."""
    return complete(checkpoint, None, sampler)


def _prefix_token_ids(
    checkpoint: Checkpoint, prefix: Sketch | TokenSequence | None, vocab: Vocabulary
) -> tuple[int, ...]:
    if prefix is None:
        return (vocab.bos,)
    if isinstance(prefix, Sketch):
        from .training import tokenize_sketch

        seq, _ = tokenize_sketch(
            prefix, checkpoint.dictionary(), vocab, checkpoint.config.max_seq_len
        )
    else:
        seq = prefix
    ids = list(seq.content)
    while ids and ids[-1] in (vocab.eos, vocab.pad):
        ids.pop()
    if not ids or ids[0] != vocab.bos:
        ids.insert(0, vocab.bos)
    return tuple(ids)


__all__ = [
    "SamplerConfig",
    "GenerationResult",
    "TEMPERATURE_SWEEP",
    "sample_next",
    "distribution_entropy",
    "generate",
    "complete",
]
