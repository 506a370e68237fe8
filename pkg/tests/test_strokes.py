import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sketchlm.strokes import (
    CorpusFormatError,
    DegenerateSketchError,
    Sketch,
    SketchCorpus,
    Stroke3Point,
    load_corpus,
    normalize,
    parse_quickdraw_ndjson,
    save_corpus,
    sketch_from_arrays,
)
from sketchlm.synthetic import synthesize


def ndjson(*objs):
    return io.BytesIO("\n".join(json.dumps(o) for o in objs).encode())


def test_parse_single_stroke_differencing():
    corpus, report = parse_quickdraw_ndjson(
        ndjson({"word": "line", "drawing": [[[0, 10, 10], [0, 0, 5]]]})
    )
    assert report.parsed == 1
    (sketch,) = corpus.sketches
    assert [(p.dx, p.dy, p.pen) for p in sketch.points] == [
        (0.0, 0.0, 0),
        (10.0, 0.0, 0),
        (0.0, 5.0, 1),
    ]


def test_parse_two_strokes_two_pen_ups():
    corpus, _ = parse_quickdraw_ndjson(
        ndjson({"word": "x", "drawing": [[[0, 5], [0, 0]], [[0, 5], [3, 3]]]})
    )
    (sketch,) = corpus.sketches
    assert sketch.pen_up_count == 2
    assert sketch.points[-1].pen == 1


def test_parse_empty_drawing_skipped():
    corpus, report = parse_quickdraw_ndjson(
        ndjson({"word": "a", "drawing": []}, {"word": "b", "drawing": [[[0, 1], [0, 1]]]})
    )
    assert report.skipped_empty == 1
    assert len(corpus) == 1


def test_parse_malformed_line_collected_and_continues():
    stream = io.BytesIO(b'not json\n{"word": "b", "drawing": [[[0, 1], [0, 1]]]}\n')
    corpus, report = parse_quickdraw_ndjson(stream)
    assert len(report.errors) == 1
    assert "line 1" in report.errors[0]
    assert len(corpus) == 1


def test_parse_final_pen_state_always_up():
    corpus, _ = parse_quickdraw_ndjson(
        ndjson({"word": "w", "drawing": [[[0, 1, 2], [0, 0, 0]], [[9, 8], [1, 1]]]})
    )
    for sketch in corpus.sketches:
        assert sketch.points[-1].pen == 1


def test_normalize_shared_scale():
    corpus, _ = parse_quickdraw_ndjson(
        ndjson({"word": "r", "drawing": [[[0, 200, 200, 0], [0, 0, 100, 100]]]})
    )
    norm = normalize(corpus.sketches[0])
    absolutes = norm.absolutes()
    assert absolutes[:, 0].min() == pytest.approx(0.0, abs=1e-12)
    assert absolutes[:, 0].max() == pytest.approx(1.0, abs=1e-12)
    assert absolutes[:, 1].max() == pytest.approx(0.5, abs=1e-12)


def test_normalize_idempotent():
    sketch = synthesize("zigzag", jitter=0.02, seed=5)
    again = normalize(sketch)
    np.testing.assert_allclose(again.offsets(), sketch.offsets(), atol=1e-12)


def test_normalize_degenerate():
    single = Sketch(points=(Stroke3Point(0.0, 0.0, 1),))
    with pytest.raises(DegenerateSketchError, match="degenerate geometry"):
        normalize(single)


def test_synthesize_square_axis_aligned():
    sq = synthesize("square", jitter=0.0, seed=3)
    offsets = sq.offsets()[1:]  # skip anchor
    assert offsets.shape[0] == 4
    lengths = np.hypot(offsets[:, 0], offsets[:, 1])
    assert np.allclose(lengths, lengths[0])
    for dx, dy in offsets:
        assert min(abs(dx), abs(dy)) == pytest.approx(0.0, abs=1e-12)


def test_synthesize_deterministic_and_seed_sensitive():
    a = synthesize("zigzag", jitter=0.01, seed=1)
    b = synthesize("zigzag", jitter=0.01, seed=1)
    c = synthesize("zigzag", jitter=0.01, seed=2)
    assert a.offsets().tolist() == b.offsets().tolist()
    assert a.offsets().tolist() != c.offsets().tolist()


def test_synthesize_unknown_shape():
    with pytest.raises(ValueError, match="unknown shape"):
        synthesize("blob", jitter=0.0, seed=0)


def test_corpus_roundtrip_byte_identical(tmp_path):
    sketches = [synthesize("square", 0.02, seed=s, label="square") for s in range(50)]
    sketches += [synthesize("triangle", 0.02, seed=s, label="triangle") for s in range(50)]
    corpus = SketchCorpus(sketches=sketches, class_names=["square", "triangle"])
    p1, p2 = tmp_path / "a.skc", tmp_path / "b.skc"
    save_corpus(corpus, p1)
    loaded = load_corpus(p1)
    save_corpus(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.class_names == corpus.class_names
    assert [s.label for s in loaded.sketches] == [s.label for s in corpus.sketches]


def test_corpus_truncated_file(tmp_path):
    corpus = SketchCorpus(
        sketches=[synthesize("square", 0.0, 0, label="square")], class_names=["square"]
    )
    path = tmp_path / "c.skc"
    save_corpus(corpus, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 7])
    with pytest.raises(CorpusFormatError, match="truncated"):
        load_corpus(path)


def test_corpus_version_mismatch(tmp_path):
    corpus = SketchCorpus(sketches=[synthesize("square", 0.0, 0, label="square")], class_names=["square"])
    path = tmp_path / "c.skc"
    save_corpus(corpus, path)
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(CorpusFormatError, match="99"):
        load_corpus(path)


def test_empty_corpus_roundtrip(tmp_path):
    corpus = SketchCorpus(sketches=[], class_names=["cat", "dog"])
    path = tmp_path / "empty.skc"
    save_corpus(corpus, path)
    loaded = load_corpus(path)
    assert len(loaded) == 0
    assert loaded.class_names == ["cat", "dog"]


offsets_strategy = st.lists(
    st.tuples(
        st.floats(-1, 1, allow_nan=False, width=32),
        st.floats(-1, 1, allow_nan=False, width=32),
    ),
    min_size=2,
    max_size=40,
)


@given(offsets_strategy)
@settings(max_examples=60, deadline=None)
def test_differencing_integration_duality(offs):
    offsets = np.array(offs, dtype=np.float64)
    pens = np.zeros(len(offsets), dtype=np.int64)
    pens[-1] = 1
    sketch = sketch_from_arrays(offsets, pens)
    absolutes = sketch.absolutes()
    rediffed = np.empty_like(absolutes)
    rediffed[0] = absolutes[0]
    rediffed[1:] = np.diff(absolutes, axis=0)
    np.testing.assert_allclose(rediffed, offsets, atol=1e-12)


@given(offsets_strategy, st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_normalize_idempotent_property(offs, seed):
    offsets = np.array(offs, dtype=np.float64)
    pens = np.zeros(len(offsets), dtype=np.int64)
    pens[-1] = 1
    sketch = sketch_from_arrays(offsets, pens)
    try:
        once = normalize(sketch)
    except DegenerateSketchError:
        return
    twice = normalize(once)
    np.testing.assert_allclose(twice.offsets(), once.offsets(), atol=1e-12)
    absolutes = once.absolutes()
    assert absolutes.min() >= -1e-12
    assert absolutes.max() <= 1 + 1e-12
