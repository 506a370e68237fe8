"""Accuracy metrics, recognizability scoring, and ablation sweeps.

Recognizability replaces the original image-CNN judge with this package's own
token-sequence classifier: generated sketches are labeled by their generating
class and scored by the classifier's top-1/top-5 accuracy. Full-scale
reference numbers live in the experiment configs as documentation targets, not
assertions.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    top1: float
    top5: float
    confusion: np.ndarray  # [C, C] counts, rows = true class
    class_names: list[str]
    sample_count: int

    @property
    def per_class(self) -> np.ndarray:
        totals = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, np.diag(self.confusion) / np.maximum(totals, 1), np.nan)

    def to_dict(self) -> dict:
        return {
            "top1": self.top1,
            "top5": self.top5,
            "confusion": self.confusion.tolist(),
            "class_names": self.class_names,
            "per_class": [None if np.isnan(v) else float(v) for v in self.per_class],
            "sample_count": self.sample_count,
        }

    def table(self) -> str:
        width = max((len(c) for c in self.class_names), default=5) + 2
        lines = [f"top1={self.top1:.4f} top5={self.top5:.4f} n={self.sample_count}"]
        for i, name in enumerate(self.class_names):
            acc = self.per_class[i]
            acc_s = "   -" if np.isnan(acc) else f"{acc:.3f}"
            lines.append(f"{name:<{width}}{acc_s}")
        return "\n".join(lines)


def topk_accuracy(logits: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of rows whose label ranks in the top k logits.

    Ties at the k-th score resolve toward the lower class index, via a stable
    sort on descending score.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > logits.shape[1]:
        raise ValueError(f"k={k} exceeds {logits.shape[1]} classes")
    ranked = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    hits = (ranked == labels[:, None]).any(axis=1)
    return float(hits.mean())


def confusion_matrix(logits: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    predicted = np.argmax(logits, axis=1)
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (labels, predicted), 1)
    return out


def evaluate_classifier(logits: np.ndarray, labels: np.ndarray, class_names: list[str]) -> EvalReport:
    c = len(class_names)
    return EvalReport(
        top1=topk_accuracy(logits, labels, 1),
        top5=topk_accuracy(logits, labels, min(5, c)),
        confusion=confusion_matrix(logits, labels, c),
        class_names=list(class_names),
        sample_count=len(labels),
    )


def recognizability(
    generators: dict[str, "Checkpoint"],
    classifier: "Checkpoint",
    n_per_class: int,
    temperature: float = 1.0,
    seed: int = 0,
) -> EvalReport:
    """Generate n sketches per class and score them with the classifier.

    The generating class is the ground-truth label; higher accuracy means the
    classifier finds the generations more readily recognizable.
    """
    from .model import forward_classify_batch
    from .sampling import SamplerConfig, generate
    from .tokenizer import sequence_from_ids

    class_names = classifier.class_names
    missing = sorted(set(generators) - set(class_names))
    if missing or not generators:
        raise ValueError(
            f"generator classes {sorted(generators)} disagree with classifier classes {class_names}"
        )
    vocab = classifier.vocabulary()
    logits_rows = []
    labels = []
    for ci, name in enumerate(class_names):
        if name not in generators:
            continue
        result = generate(
            generators[name],
            SamplerConfig(
                temperature=temperature,
                max_new_tokens=classifier.config.max_seq_len - 1,
                seed=seed + ci,
                num_samples=n_per_class,
            ),
        )
        for ids in result.sequences:
            seq = sequence_from_ids(ids, vocab)
            mat = np.asarray(seq.ids, dtype=np.int64)[None, :]
            try:
                eos_pos = seq.ids.index(vocab.eos)
            except ValueError:
                eos_pos = len(seq.ids) - 1  # length-limited sample: read last token
            out = forward_classify_batch(
                classifier.params,
                mat,
                np.asarray([seq.attention_length]),
                np.asarray([eos_pos]),
            )
            logits_rows.append(out.data[0])
            labels.append(ci)
    return evaluate_classifier(
        np.stack(logits_rows), np.asarray(labels, dtype=np.int64), class_names
    )


@dataclass
class AblationRow:
    axis: str
    point: object
    report: EvalReport | None
    wall_s: float
    skipped_reason: str | None = None


def ablation_runner(
    axis: str,
    grid: Sequence,
    base_plan: "TrainPlan",
    corpus: "SketchCorpus",
    base_config: "ModelConfig",
    dictionary: "PrimitiveDictionary | None" = None,
    pretrained: "Checkpoint | None" = None,
) -> list[AblationRow]:
    """Sweep one axis (class_count, train_size, or network_size) with all else
    fixed; each grid point runs a classification fine-tune and reports top-1/5.

    network_size grid points are (layers, heads, hidden) triples. Infeasible
    points are skipped with a reason instead of failing the sweep.
    """
    from .checkpoint import Checkpoint
    from .model import ModelConfig, init_parameters
    from .primitives import build_dictionary
    from .training import finetune_classify, labeled_dataset_from_corpus
    from .tokenizer import Vocabulary
    from dataclasses import replace

    if axis not in ("class_count", "train_size", "network_size"):
        raise ValueError(f"unknown ablation axis {axis!r}")
    dictionary = dictionary or build_dictionary()
    vocab = Vocabulary(dictionary.orientation_count)
    rows: list[AblationRow] = []
    for point in grid:
        t0 = time.perf_counter()
        config = base_config
        sub = corpus
        reason = None
        if axis == "class_count":
            if point > len(corpus.class_names):
                reason = f"corpus has only {len(corpus.class_names)} classes"
            else:
                sub = corpus.subset(corpus.class_names[: int(point)])
        elif axis == "train_size":
            per_class: dict[str, int] = {}
            kept = []
            for s in corpus.sketches:
                if s.label is None:
                    continue
                if per_class.get(s.label, 0) < int(point):
                    kept.append(s)
                    per_class[s.label] = per_class.get(s.label, 0) + 1
            if per_class and min(per_class.values()) < int(point):
                log.warning("train_size %s under-filled: %s", point, per_class)
            from .strokes import SketchCorpus as _SC

            sub = _SC(sketches=kept, class_names=list(corpus.class_names), split=corpus.split)
        else:
            layers, heads, hidden = point
            if hidden % heads != 0:
                reason = f"hidden {hidden} not divisible by heads {heads}"
            else:
                config = replace(base_config, layers=layers, heads=heads, hidden=hidden)
        if reason is not None:
            rows.append(AblationRow(axis, point, None, 0.0, skipped_reason=reason))
            continue
        data = labeled_dataset_from_corpus(sub, dictionary, vocab, config.max_seq_len)
        if pretrained is not None and axis != "network_size":
            start = pretrained
        else:
            start = Checkpoint(
                params=init_parameters(config, seed=base_plan.seed, dtype=base_plan.np_dtype),
                orientation_count=dictionary.orientation_count,
                primitive_length=dictionary.primitive_length,
            )
        ckpt = finetune_classify(start, data, base_plan)
        report = classifier_report_on_split(ckpt, data, base_plan)
        rows.append(AblationRow(axis, point, report, time.perf_counter() - t0))
    return rows


def classifier_report_on_split(
    classifier: "Checkpoint", data: "LabeledDataset", plan: "TrainPlan"
) -> EvalReport:
    """Full report on the same validation subset finetune_classify held out."""
    from .model import forward_classify_batch
    from .training import _pad_batch, _split_indices

    vocab = classifier.vocabulary()
    sequences = [seq for seq, _ in data.examples]
    labels = np.array([label for _, label in data.examples], dtype=np.int64)
    _, val_idx = _split_indices(len(sequences), plan.val_fraction, plan.seed)
    if len(val_idx) == 0:
        val_idx = np.arange(len(sequences))
    chunks = []
    for start in range(0, len(val_idx), plan.batch_size):
        idx = val_idx[start : start + plan.batch_size]
        mat, lengths = _pad_batch(sequences, idx, vocab.pad)
        out = forward_classify_batch(classifier.params, mat, lengths, eos_positions=lengths - 1)
        chunks.append(out.data)
    return evaluate_classifier(np.concatenate(chunks), labels[val_idx], data.class_names)


__all__ = [
    "EvalReport",
    "AblationRow",
    "topk_accuracy",
    "confusion_matrix",
    "evaluate_classifier",
    "recognizability",
    "ablation_runner",
]
