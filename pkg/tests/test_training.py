import math

import numpy as np
import pytest

from sketchlm.checkpoint import (
    CheckpointFormatError,
    load_checkpoint,
    save_checkpoint,
)
from sketchlm.model import ModelConfig, forward_lm_batch, init_parameters
from sketchlm.primitives import build_dictionary
from sketchlm.strokes import SketchCorpus
from sketchlm.synthetic import synthesize, synthetic_corpus
from sketchlm.tokenizer import Vocabulary
from sketchlm.training import (
    LabeledDataset,
    MetricsWriter,
    TrainPlan,
    _lm_loss,
    _pad_batch,
    early_stop,
    finetune_classify,
    finetune_completion,
    labeled_dataset_from_corpus,
    pretrain,
    tokenize_corpus,
)

DICT = build_dictionary(36, 0.05)
VOCAB = Vocabulary(36)


def small_corpus(n=6):
    shapes = ["square", "triangle"]
    sketches = [
        synthesize(s, jitter=0.02, seed=i, label=s) for i in range(n // 2) for s in shapes
    ]
    return SketchCorpus(sketches=sketches, class_names=shapes)


def small_config(**kw):
    base = dict(layers=1, heads=2, hidden=16, max_seq_len=128, vocab_size=40, dropout=0.0)
    base.update(kw)
    return ModelConfig(**base)


# --- early stopping -------------------------------------------------------

def test_early_stop_walkthrough():
    stop, best = early_stop([1.0, 0.9, 0.95, 0.96, 0.97], patience=2)
    assert stop and best == 1


def test_early_stop_never_on_improving():
    stop, best = early_stop([5.0, 4.0, 3.0, 2.0], patience=1)
    assert not stop and best == 3


def test_early_stop_flat_series():
    stop, best = early_stop([1.0, 1.0], patience=1)
    assert stop and best == 0


def test_early_stop_max_mode():
    stop, best = early_stop([0.1, 0.5, 0.4, 0.4], patience=2, mode="max")
    assert stop and best == 1


# --- tokenization ---------------------------------------------------------

def test_tokenize_corpus_reports_truncation():
    corpus = small_corpus()
    seqs, labels, report = tokenize_corpus(corpus, DICT, VOCAB, max_seq_len=24)
    assert report.truncated == report.tokenized == len(seqs)
    assert all(len(s.ids) == 24 for s in seqs)
    assert all(s.ids[0] == VOCAB.bos for s in seqs)


def test_pad_batch_shapes():
    seqs, _, _ = tokenize_corpus(small_corpus(), DICT, VOCAB, 512)
    mat, lengths = _pad_batch(seqs, np.arange(len(seqs)), VOCAB.pad)
    assert mat.shape == (len(seqs), lengths.max())
    for row, seq in zip(mat, seqs):
        assert (row[: seq.attention_length] == np.array(seq.content)).all()
        assert (row[seq.attention_length :] == VOCAB.pad).all()


def test_lm_loss_ignores_pad_positions():
    # loss over a batch padded to twice the needed width must be unchanged
    cfg = small_config()
    params = init_parameters(cfg, seed=0, dtype=np.float64)
    seqs, _, _ = tokenize_corpus(small_corpus(), DICT, VOCAB, 512)
    mat, lengths = _pad_batch(seqs, np.arange(len(seqs)), VOCAB.pad)
    wide = np.full((mat.shape[0], mat.shape[1] + 13), VOCAB.pad, dtype=np.int64)
    wide[:, : mat.shape[1]] = mat
    tight = _lm_loss(params, mat, lengths, VOCAB, training=False, rng=None)
    loose = _lm_loss(params, wide, lengths, VOCAB, training=False, rng=None)
    assert tight.item() == pytest.approx(loose.item(), abs=1e-9)


# --- pretrain -------------------------------------------------------------

def test_pretrain_rejects_empty_corpus():
    with pytest.raises(ValueError, match="empty"):
        pretrain(SketchCorpus(sketches=[], class_names=[]), small_config(), TrainPlan(epochs=1))


def test_pretrain_vocab_mismatch():
    cfg = small_config(vocab_size=12)
    with pytest.raises(ValueError, match="vocab_size"):
        pretrain(small_corpus(), cfg, TrainPlan(epochs=1), DICT)


def test_pretrain_initial_loss_near_uniform():
    corpus = small_corpus()
    metrics = MetricsWriter(None)
    plan = TrainPlan(epochs=1, batch_size=6, lr=0.0, val_fraction=0.0, dropout=0.0, warmup_frac=0.0)
    pretrain(corpus, small_config(), plan, DICT, metrics=metrics)
    first = metrics.records[0]
    assert first["split"] == "train"
    assert abs(first["loss"] - math.log(40)) <= 0.1 * math.log(40)


def test_pretrain_deterministic_loss_curves():
    corpus = small_corpus()
    plan = TrainPlan(epochs=3, batch_size=3, lr=1e-3, val_fraction=0.2, seed=11, dtype="float64")
    m1, m2 = MetricsWriter(None), MetricsWriter(None)
    pretrain(corpus, small_config(), plan, DICT, metrics=m1)
    pretrain(corpus, small_config(), plan, DICT, metrics=m2)
    losses1 = [(r["split"], r["loss"]) for r in m1.records]
    losses2 = [(r["split"], r["loss"]) for r in m2.records]
    assert losses1 == losses2  # bit-identical at 64-bit


def test_metrics_log_written(tmp_path):
    corpus = small_corpus()
    path = tmp_path / "metrics.ndjson"
    plan = TrainPlan(epochs=2, batch_size=3, val_fraction=0.2)
    pretrain(corpus, small_config(), plan, DICT, metrics=MetricsWriter(path))
    import json

    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert {r["split"] for r in records} == {"train", "validation"}
    assert all(set(r) == {"epoch", "split", "loss", "top1", "top5", "wall_ms"} for r in records)


# --- fine-tuning ----------------------------------------------------------

def pretrained_checkpoint():
    plan = TrainPlan(epochs=1, batch_size=6, val_fraction=0.0, lr=1e-3)
    return pretrain(small_corpus(), small_config(), plan, DICT)


def test_finetune_completion_rejects_mixed_classes():
    ckpt = pretrained_checkpoint()
    with pytest.raises(ValueError, match="single class"):
        finetune_completion(ckpt, small_corpus(), TrainPlan(epochs=1))


def test_finetune_completion_zero_epochs_identity():
    ckpt = pretrained_checkpoint()
    single = small_corpus().subset(["square"])
    out = finetune_completion(ckpt, single, TrainPlan(epochs=0))
    assert out is ckpt


def test_finetune_completion_improves_class_loss():
    ckpt = pretrained_checkpoint()
    single = SketchCorpus(
        sketches=[synthesize("square", 0.02, seed=i, label="square") for i in range(8)],
        class_names=["square"],
    )
    seqs, _, _ = tokenize_corpus(single, DICT, VOCAB, 128)
    mat, lengths = _pad_batch(seqs, np.arange(len(seqs)), VOCAB.pad)
    before = _lm_loss(ckpt.params, mat, lengths, VOCAB, training=False, rng=None).item()
    tuned = finetune_completion(
        ckpt, single, TrainPlan(epochs=8, batch_size=8, lr=1e-3, val_fraction=0.0)
    )
    after = _lm_loss(tuned.params, mat, lengths, VOCAB, training=False, rng=None).item()
    assert after < before
    assert tuned.class_names == ["square"]


def test_finetune_classify_head_mismatch_errors():
    ckpt = pretrained_checkpoint()
    data = labeled_dataset_from_corpus(small_corpus(), DICT, VOCAB, 128)
    wrong = finetune_classify(ckpt, data, TrainPlan(epochs=1, batch_size=4))
    # a 2-class head now exists; 3-class data must be rejected
    three = synthetic_corpus(["square", "triangle", "circle"], 2, seed=0)
    data3 = labeled_dataset_from_corpus(three, DICT, VOCAB, 128)
    with pytest.raises(ValueError, match="classes"):
        finetune_classify(wrong, data3, TrainPlan(epochs=1, batch_size=4))


def test_finetune_classify_freeze_backbone_only_moves_head():
    ckpt = pretrained_checkpoint()
    data = labeled_dataset_from_corpus(small_corpus(), DICT, VOCAB, 128)
    before = {k: t.data.copy() for k, t in ckpt.params.tensors.items()}
    plan = TrainPlan(epochs=1, batch_size=4, freeze_backbone=True, val_fraction=0.0)
    tuned = finetune_classify(ckpt, data, plan)
    for name, arr in before.items():
        same = np.array_equal(tuned.params[name].data, arr)
        assert same != name.startswith("cls_head")


def test_labeled_dataset_rejects_bad_labels():
    seqs, _, _ = tokenize_corpus(small_corpus(), DICT, VOCAB, 128)
    with pytest.raises(ValueError, match="label index"):
        LabeledDataset(examples=[(seqs[0], 5)], class_names=["a", "b"])


# --- checkpoints ----------------------------------------------------------

def probe_logits(ckpt):
    rng = np.random.default_rng(0)
    ids = np.array([[VOCAB.bos] + rng.integers(0, 36, size=6).tolist() + [VOCAB.eos]])
    return forward_lm_batch(ckpt.params, ids, np.array([8])).data


def test_checkpoint_roundtrip_bit_identical(tmp_path):
    ckpt = pretrained_checkpoint()
    path = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    np.testing.assert_array_equal(probe_logits(ckpt), probe_logits(loaded))
    assert loaded.config == ckpt.config
    assert loaded.orientation_count == 36
    assert loaded.optimizer is not None
    assert loaded.optimizer.step == ckpt.optimizer.step
    for name in ckpt.params.tensors:
        np.testing.assert_array_equal(
            loaded.optimizer.m[name], ckpt.optimizer.m[name]
        )


def test_checkpoint_resave_identical_bytes(tmp_path):
    ckpt = pretrained_checkpoint()
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(ckpt, p1)
    save_checkpoint(load_checkpoint(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_version_mismatch(tmp_path):
    ckpt = pretrained_checkpoint()
    path = tmp_path / "v.ckpt"
    save_checkpoint(ckpt, path)
    data = bytearray(path.read_bytes())
    data[4] = 42
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError, match="42"):
        load_checkpoint(path)


def test_checkpoint_config_mismatch_names_field(tmp_path):
    ckpt = pretrained_checkpoint()
    path = tmp_path / "c.ckpt"
    save_checkpoint(ckpt, path)
    other = small_config(hidden=32)
    with pytest.raises(CheckpointFormatError, match="hidden"):
        load_checkpoint(path, expect_config=other)


def test_checkpoint_truncated(tmp_path):
    ckpt = pretrained_checkpoint()
    path = tmp_path / "t.ckpt"
    save_checkpoint(ckpt, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointFormatError, match="truncated"):
        load_checkpoint(path)
