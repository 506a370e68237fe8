"""Pre-training, fine-tuning, early stopping, and the metrics log.

Pre-training minimizes next-token NLL over the whole corpus with no class
discrimination. Completion fine-tuning is the same objective restricted to a
single class: completion itself emerges from prefix conditioning at sampling
time, so there is no separate loss. Classification fine-tuning attaches a
head, reads the EOS-position activation, and minimizes class NLL.

Determinism contract: a fixed plan seed with single-threaded BLAS yields
bit-identical parameter trajectories; every RNG stream (split, batch order,
dropout) derives from the plan seed by a fixed scheme.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tape, Tensor
from .checkpoint import Checkpoint, clone_params
from .evaluation import topk_accuracy
from .model import (
    ModelConfig,
    ModelParameters,
    add_classification_head,
    forward_classify_batch,
    forward_lm_batch,
    init_parameters,
)
from .optim import AdamState, adam_step, clip_global_norm, warmup_lr, zero_grads
from .primitives import PrimitiveDictionary, abstract_sketch, build_dictionary
from .strokes import DegenerateSketchError, Sketch, SketchCorpus, normalize
from .tokenizer import TokenSequence, Vocabulary, encode, pad_or_truncate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainPlan:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 3e-4
    warmup_frac: float = 0.05
    patience: int = 5
    val_fraction: float = 0.1
    seed: int = 0
    max_steps: int | None = None
    grad_clip: float = 1.0
    dropout: float = 0.1
    dtype: str = "float32"
    freeze_backbone: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ValueError("val_fraction must be in [0, 1)")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class LabeledDataset:
    examples: list[tuple[TokenSequence, int]]
    class_names: list[str]

    def __post_init__(self) -> None:
        for _, label in self.examples:
            if not (0 <= label < len(self.class_names)):
                raise ValueError(f"label index {label} outside {len(self.class_names)} classes")

    def __len__(self) -> int:
        return len(self.examples)


@dataclass
class TokenizeReport:
    tokenized: int = 0
    truncated: int = 0
    skipped_degenerate: int = 0
    lengths: list[int] = field(default_factory=list)


def tokenize_sketch(
    sketch: Sketch,
    dictionary: PrimitiveDictionary,
    vocab: Vocabulary,
    max_seq_len: int,
) -> tuple[TokenSequence, bool]:
    """Normalize, abstract, encode, and cap one sketch. Returns (seq, truncated)."""
    abstracted = abstract_sketch(normalize(sketch), dictionary)
    seq = encode(abstracted, vocab)
    if len(seq) > max_seq_len:
        return pad_or_truncate(seq, max_seq_len, vocab)
    return seq, False


def tokenize_corpus(
    corpus: SketchCorpus,
    dictionary: PrimitiveDictionary,
    vocab: Vocabulary,
    max_seq_len: int,
) -> tuple[list[TokenSequence], list[int | None], TokenizeReport]:
    report = TokenizeReport()
    sequences: list[TokenSequence] = []
    labels: list[int | None] = []
    index = {name: i for i, name in enumerate(corpus.class_names)}
    for sketch in corpus.sketches:
        try:
            seq, truncated = tokenize_sketch(sketch, dictionary, vocab, max_seq_len)
        except DegenerateSketchError:
            report.skipped_degenerate += 1
            continue
        report.tokenized += 1
        report.truncated += int(truncated)
        report.lengths.append(seq.attention_length)
        sequences.append(seq)
        labels.append(index[sketch.label] if sketch.label is not None else None)
    if report.truncated:
        log.warning("%d/%d sequences exceeded context %d and were truncated",
                    report.truncated, report.tokenized, max_seq_len)
    return sequences, labels, report


def early_stop(history: Sequence[float], patience: int, mode: str = "min") -> tuple[bool, int]:
    """Stop once the metric fails to improve for `patience` consecutive epochs.

    Returns (should_stop, best_epoch); ties keep the earliest best epoch.
    """
    if patience < 1:
        raise ValueError("patience must be >= 1")
    if mode not in ("min", "max"):
        raise ValueError(f"unknown mode {mode!r}")
    sign = 1.0 if mode == "min" else -1.0
    best = None
    best_epoch = 0
    since_best = 0
    for epoch, value in enumerate(history):
        v = sign * value
        if best is None or v < best:
            best = v
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
    return since_best >= patience, best_epoch


class MetricsWriter:
    """Newline-delimited JSON records {epoch, split, loss, top1, top5, wall_ms}."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def write(self, epoch: int, split: str, loss: float,
              top1: float | None = None, top5: float | None = None,
              wall_ms: float | None = None) -> None:
        rec = {"epoch": epoch, "split": split, "loss": loss,
               "top1": top1, "top5": top5, "wall_ms": wall_ms}
        self.records.append(rec)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(rec) + "\n")


def _split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng([seed, 1]).permutation(n)
    n_val = int(round(n * val_fraction))
    if val_fraction > 0 and n_val == 0 and n > 1:
        n_val = 1
    return order[n_val:], order[:n_val]


def _pad_batch(
    sequences: Sequence[TokenSequence], idx: np.ndarray, pad_id: int
) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([sequences[i].attention_length for i in idx], dtype=np.int64)
    width = int(lengths.max())
    mat = np.full((len(idx), width), pad_id, dtype=np.int64)
    for row, i in enumerate(idx):
        content = sequences[i].content
        mat[row, : len(content)] = content
    return mat, lengths


def _lm_loss(
    params: ModelParameters,
    mat: np.ndarray,
    lengths: np.ndarray,
    vocab: Vocabulary,
    training: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    inputs = mat[:, :-1]
    targets = mat[:, 1:].reshape(-1)
    logits = forward_lm_batch(params, inputs, lengths - 1, training=training, rng=rng)
    flat = ag.reshape(logits, (inputs.shape[0] * inputs.shape[1], params.config.vocab_size))
    return ag.cross_entropy(flat, targets, ignore_id=vocab.pad)


def _cls_loss(
    params: ModelParameters,
    mat: np.ndarray,
    lengths: np.ndarray,
    labels: np.ndarray,
    training: bool,
    rng: np.random.Generator | None,
) -> tuple[Tensor, Tensor]:
    logits = forward_classify_batch(
        params, mat, lengths, eos_positions=lengths - 1, training=training, rng=rng
    )
    return ag.cross_entropy(logits, labels), logits


def _eval_lm_loss(params, sequences, idx, vocab, batch_size) -> float:
    losses = []
    for start in range(0, len(idx), batch_size):
        chunk = idx[start : start + batch_size]
        mat, lengths = _pad_batch(sequences, chunk, vocab.pad)
        loss = _lm_loss(params, mat, lengths, vocab, training=False, rng=None)
        losses.append(loss.item())
    return float(np.mean(losses)) if losses else float("nan")


def _run_lm_training(
    params: ModelParameters,
    sequences: list[TokenSequence],
    plan: TrainPlan,
    vocab: Vocabulary,
    metrics: MetricsWriter | None = None,
    optimizer: AdamState | None = None,
) -> tuple[ModelParameters, AdamState, int, float | None]:
    """Shared next-token training loop. Returns best-val params when a
    validation split exists, otherwise the final params."""
    metrics = metrics or MetricsWriter(None)
    train_idx, val_idx = _split_indices(len(sequences), plan.val_fraction, plan.seed)
    if len(train_idx) == 0:
        raise ValueError("no training sequences after the validation split")
    state = optimizer or AdamState(lr=plan.lr)
    dropout_rng = np.random.default_rng([plan.seed, 2])
    plan_cfg = replace(params.config, dropout=plan.dropout)
    params = ModelParameters(config=plan_cfg, tensors=params.tensors)
    steps_per_epoch = int(np.ceil(len(train_idx) / plan.batch_size))
    total_steps = plan.max_steps or max(1, plan.epochs * steps_per_epoch)
    step = 0
    val_history: list[float] = []
    best_params: ModelParameters | None = None
    best_metric: float | None = None
    best_epoch = 0
    for epoch in range(plan.epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng([plan.seed, 3, epoch]).permutation(train_idx)
        batch_losses = []
        for start in range(0, len(order), plan.batch_size):
            if plan.max_steps is not None and step >= plan.max_steps:
                break
            chunk = order[start : start + plan.batch_size]
            mat, lengths = _pad_batch(sequences, chunk, vocab.pad)
            zero_grads(params.tensors)
            with Tape() as tape:
                loss = _lm_loss(params, mat, lengths, vocab, training=True, rng=dropout_rng)
            tape.backward(loss)
            clip_global_norm(params.tensors, plan.grad_clip)
            adam_step(params.tensors, state, lr=warmup_lr(plan.lr, step, total_steps, plan.warmup_frac))
            batch_losses.append(loss.item())
            step += 1
        if not batch_losses:  # step cap landed exactly on an epoch boundary
            break
        train_loss = float(np.mean(batch_losses))
        metrics.write(epoch, "train", train_loss, wall_ms=(time.perf_counter() - t0) * 1e3)
        if len(val_idx) > 0:
            val_loss = _eval_lm_loss(params, sequences, val_idx, vocab, plan.batch_size)
            metrics.write(epoch, "validation", val_loss)
            val_history.append(val_loss)
            if best_metric is None or val_loss < best_metric:
                best_metric = val_loss
                best_params = clone_params(params)
                best_epoch = epoch
            stop, _ = early_stop(val_history, plan.patience)
            if stop:
                break
        if plan.max_steps is not None and step >= plan.max_steps:
            break
    if best_params is not None:
        return best_params, state, best_epoch, best_metric
    return params, state, plan.epochs - 1, best_metric


def pretrain(
    corpus: SketchCorpus,
    config: ModelConfig,
    plan: TrainPlan,
    dictionary: PrimitiveDictionary | None = None,
    metrics: MetricsWriter | None = None,
) -> Checkpoint:
    """Next-token pre-training across the whole corpus, class-agnostic."""
    if len(corpus) == 0:
        raise ValueError("cannot pretrain on an empty corpus")
    dictionary = dictionary or build_dictionary()
    vocab = Vocabulary(dictionary.orientation_count)
    if config.vocab_size != vocab.size:
        raise ValueError(
            f"config vocab_size {config.vocab_size} != dictionary vocabulary {vocab.size}"
        )
    sequences, _, report = tokenize_corpus(corpus, dictionary, vocab, config.max_seq_len)
    if not sequences:
        raise ValueError("corpus produced no usable sequences")
    params = init_parameters(config, seed=plan.seed, dtype=plan.np_dtype)
    params, state, best_epoch, best_metric = _run_lm_training(
        params, sequences, plan, vocab, metrics
    )
    return Checkpoint(
        params=params,
        orientation_count=dictionary.orientation_count,
        primitive_length=dictionary.primitive_length,
        class_names=list(corpus.class_names),
        optimizer=state,
        epoch=best_epoch,
        best_metric=best_metric,
    )


def finetune_completion(
    checkpoint: Checkpoint,
    class_corpus: SketchCorpus,
    plan: TrainPlan,
    metrics: MetricsWriter | None = None,
) -> Checkpoint:
    """Continue next-token training on a single class."""
    labels = {s.label for s in class_corpus.sketches}
    if len(labels) != 1:
        raise ValueError(f"completion fine-tuning requires a single class, got {sorted(map(str, labels))}")
    if plan.epochs == 0:
        return checkpoint
    dictionary = checkpoint.dictionary()
    vocab = checkpoint.vocabulary()
    sequences, _, _ = tokenize_corpus(
        class_corpus, dictionary, vocab, checkpoint.config.max_seq_len
    )
    if not sequences:
        raise ValueError("class corpus produced no usable sequences")
    params = clone_params(checkpoint.params)
    params, state, best_epoch, best_metric = _run_lm_training(
        params, sequences, plan, vocab, metrics
    )
    label = next(iter(labels))
    return Checkpoint(
        params=params,
        orientation_count=checkpoint.orientation_count,
        primitive_length=checkpoint.primitive_length,
        class_names=[label] if label is not None else [],
        optimizer=state,
        epoch=best_epoch,
        best_metric=best_metric,
    )


def _eval_classifier(params, sequences, labels, idx, vocab, batch_size):
    all_logits = []
    all_labels = []
    losses = []
    for start in range(0, len(idx), batch_size):
        chunk = idx[start : start + batch_size]
        mat, lengths = _pad_batch(sequences, chunk, vocab.pad)
        lab = labels[chunk]
        loss, logits = _cls_loss(params, mat, lengths, lab, training=False, rng=None)
        losses.append(loss.item())
        all_logits.append(logits.data)
        all_labels.append(lab)
    logits = np.concatenate(all_logits)
    lab = np.concatenate(all_labels)
    k5 = min(5, logits.shape[1])
    return (
        float(np.mean(losses)),
        topk_accuracy(logits, lab, 1),
        topk_accuracy(logits, lab, k5),
    )


def finetune_classify(
    checkpoint: Checkpoint,
    data: LabeledDataset,
    plan: TrainPlan,
    metrics: MetricsWriter | None = None,
) -> Checkpoint:
    """Full fine-tune with a classification head; returns the best-val-accuracy
    checkpoint. Set plan.freeze_backbone to update only the head."""
    if len(data) == 0:
        raise ValueError("empty labeled dataset")
    metrics = metrics or MetricsWriter(None)
    vocab = checkpoint.vocabulary()
    num_classes = len(data.class_names)
    params = clone_params(checkpoint.params)
    if params.config.num_classes is not None and params.config.num_classes != num_classes:
        raise ValueError(
            f"dataset has {num_classes} classes but checkpoint head is configured "
            f"for {params.config.num_classes}"
        )
    if "cls_head.w" not in params.tensors:
        params = add_classification_head(params, num_classes)
    params = ModelParameters(
        config=replace(params.config, dropout=plan.dropout), tensors=params.tensors
    )
    sequences = [seq for seq, _ in data.examples]
    labels = np.array([label for _, label in data.examples], dtype=np.int64)
    train_idx, val_idx = _split_indices(len(sequences), plan.val_fraction, plan.seed)
    if len(train_idx) == 0:
        raise ValueError("no training examples after the validation split")
    trainable = (
        {k: v for k, v in params.tensors.items() if k.startswith("cls_head")}
        if plan.freeze_backbone
        else params.tensors
    )
    state = AdamState(lr=plan.lr)
    dropout_rng = np.random.default_rng([plan.seed, 2])
    steps_per_epoch = int(np.ceil(len(train_idx) / plan.batch_size))
    total_steps = max(1, plan.epochs * steps_per_epoch)
    step = 0
    acc_history: list[float] = []
    best_params = None
    best_acc: float | None = None
    best_epoch = 0
    for epoch in range(plan.epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng([plan.seed, 3, epoch]).permutation(train_idx)
        batch_losses = []
        for start in range(0, len(order), plan.batch_size):
            chunk = order[start : start + plan.batch_size]
            mat, lengths = _pad_batch(sequences, chunk, vocab.pad)
            zero_grads(params.tensors)
            with Tape() as tape:
                loss, _ = _cls_loss(
                    params, mat, lengths, labels[chunk], training=True, rng=dropout_rng
                )
            tape.backward(loss)
            clip_global_norm(trainable, plan.grad_clip)
            adam_step(trainable, state, lr=warmup_lr(plan.lr, step, total_steps, plan.warmup_frac))
            batch_losses.append(loss.item())
            step += 1
        train_loss = float(np.mean(batch_losses))
        metrics.write(epoch, "train", train_loss, wall_ms=(time.perf_counter() - t0) * 1e3)
        if len(val_idx) > 0:
            val_loss, top1, top5 = _eval_classifier(
                params, sequences, labels, val_idx, vocab, plan.batch_size
            )
            metrics.write(epoch, "validation", val_loss, top1=top1, top5=top5)
            acc_history.append(top1)
            if best_acc is None or top1 > best_acc:
                best_acc = top1
                best_params = clone_params(params)
                best_epoch = epoch
            stop, _ = early_stop(acc_history, plan.patience, mode="max")
            if stop:
                break
    if best_params is None:
        best_params, best_epoch = params, max(plan.epochs - 1, 0)
    return Checkpoint(
        params=best_params,
        orientation_count=checkpoint.orientation_count,
        primitive_length=checkpoint.primitive_length,
        class_names=list(data.class_names),
        optimizer=state,
        epoch=best_epoch,
        best_metric=best_acc,
    )


def labeled_dataset_from_corpus(
    corpus: SketchCorpus,
    dictionary: PrimitiveDictionary,
    vocab: Vocabulary,
    max_seq_len: int,
) -> LabeledDataset:
    sequences, labels, _ = tokenize_corpus(corpus, dictionary, vocab, max_seq_len)
    examples = [
        (seq, label) for seq, label in zip(sequences, labels) if label is not None
    ]
    if len(examples) < len(sequences):
        log.warning("dropped %d unlabeled sketches", len(sequences) - len(examples))
    return LabeledDataset(examples=examples, class_names=list(corpus.class_names))


__all__ = [
    "TrainPlan",
    "LabeledDataset",
    "TokenizeReport",
    "MetricsWriter",
    "tokenize_sketch",
    "tokenize_corpus",
    "labeled_dataset_from_corpus",
    "early_stop",
    "pretrain",
    "finetune_completion",
    "finetune_classify",
]
