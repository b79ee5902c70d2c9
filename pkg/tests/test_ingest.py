import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_sequence
from pedgesture.errors import (
    KeypointNeverValid,
    MalformedFile,
    ManifestError,
    MissingRange,
    RangeOutOfBounds,
    SchemaViolation,
    TorsoUnrecoverable,
    VersionUnsupported,
)
from pedgesture.ingest import (
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    manifest_hash,
    parse_manifest,
    parse_sequence_file,
    repair_low_confidence,
    serialize_sequence,
    trim_gesture_positive,
)
from pedgesture.labels import GestureClass
from pedgesture.skeleton import KeypointIndex as K
from pedgesture.skeleton import KeypointSequence


def seq_doc(n_frames=3, n_kp=17, **extra):
    frame = [[float(i), float(2 * i), 1.0] for i in range(n_kp)]
    doc = {"schema_version": 1, "source_id": "x", "frames": [frame] * n_frames}
    doc.update(extra)
    return json.dumps(doc)


# ---- sequence files

def test_round_trip_is_exact(rng):
    seq = random_sequence(rng, 25)
    seq = replace(seq, points=seq.points + rng.normal(0, 1e-7, size=seq.points.shape),
                  fps=29.97, source_id="clip_7")
    again = parse_sequence_file(serialize_sequence(seq).encode())
    assert np.array_equal(again.points, seq.points)
    assert np.array_equal(again.confidence, seq.confidence)
    assert again.fps == 29.97 and again.source_id == "clip_7"
    assert serialize_sequence(again) == serialize_sequence(seq)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12))
def test_round_trip_property(seed, n):
    seq = random_sequence(np.random.default_rng(seed), n)
    again = parse_sequence_file(serialize_sequence(seq))
    assert np.array_equal(again.points, seq.points)
    assert np.array_equal(again.confidence, seq.confidence)


def test_fps_defaults_to_60():
    assert parse_sequence_file(seq_doc()).fps == 60.0
    assert parse_sequence_file(seq_doc(fps=30)).fps == 30.0


def test_wrong_keypoint_count_names_the_frame():
    doc = json.loads(seq_doc())
    doc["frames"][2] = doc["frames"][2][:16]
    with pytest.raises(SchemaViolation, match="frame 2"):
        parse_sequence_file(json.dumps(doc))


def test_sequence_file_errors():
    with pytest.raises(MalformedFile):
        parse_sequence_file(b"{not json")
    with pytest.raises(SchemaViolation):
        parse_sequence_file(seq_doc(fps=-5))
    with pytest.raises(VersionUnsupported):
        parse_sequence_file(seq_doc(schema_version=2))
    with pytest.warns(UserWarning, match="camera"):
        parse_sequence_file(seq_doc(camera="front"))


# ---- repair

def seq_with(conf, points=None):
    T = len(conf)
    pts = np.zeros((T, 17, 2)) if points is None else points
    for kp, off in {K.LS: (-1, 3), K.RS: (1, 3), K.LH: (-1, 0), K.RH: (1, 0)}.items():
        pts[:, kp] = np.array(off) * 100.0 + 500.0
    return KeypointSequence(pts, conf)


def test_repair_noop_when_all_confident(rng):
    seq = random_sequence(rng, 8)
    seq = replace(seq, confidence=np.ones((8, 17)))
    out = repair_low_confidence(seq, 0.3)
    assert np.array_equal(out.points, seq.points)
    assert np.array_equal(out.confidence, seq.confidence)


def test_repair_midpoint_interpolation():
    conf = np.ones((3, 17))
    conf[1, K.LW] = 0.1
    pts = np.zeros((3, 17, 2))
    pts[:, K.LW, 0] = [0.0, 55.0, 2.0]
    out = repair_low_confidence(seq_with(conf, pts), 0.3)
    assert out.points[1, K.LW, 0] == 1.0
    assert out.confidence[1, K.LW] == 0.3


def test_repair_edges_hold_nearest_valid():
    conf = np.ones((5, 17))
    conf[[0, 1, 4], K.RW] = 0.0
    pts = np.zeros((5, 17, 2))
    pts[:, K.RW, 1] = [9.0, 9.0, 4.0, 6.0, 9.0]
    out = repair_low_confidence(seq_with(conf, pts), 0.3)
    assert out.points[:, K.RW, 1].tolist() == [4.0, 4.0, 4.0, 6.0, 6.0]


def test_repair_never_valid():
    conf = np.ones((4, 17))
    conf[:, K.LW] = 0.1
    with pytest.raises(KeypointNeverValid) as err:
        repair_low_confidence(seq_with(conf), 0.3)
    assert err.value.keypoint == K.LW
    assert not isinstance(err.value, TorsoUnrecoverable)
    conf = np.ones((4, 17))
    conf[:, K.RH] = 0.0
    with pytest.raises(TorsoUnrecoverable):
        repair_low_confidence(seq_with(conf), 0.3)
    with pytest.raises(ValueError):
        repair_low_confidence(seq_with(np.ones((4, 17))), 1.5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), thr=st.floats(0.0, 0.6))
def test_repair_idempotent(seed, thr):
    rng = np.random.default_rng(seed)
    seq = random_sequence(rng, 10)
    conf = rng.uniform(0.0, 1.0, size=(10, 17))
    conf[rng.integers(10), :] = 1.0  # every keypoint valid somewhere
    seq = replace(seq, confidence=conf)
    once = repair_low_confidence(seq, thr)
    twice = repair_low_confidence(once, thr)
    assert np.array_equal(once.points, twice.points)
    assert np.array_equal(once.confidence, twice.confidence)
    assert np.all(once.confidence >= thr)


# ---- trimming

def test_trim_interval(rng):
    seq = replace(random_sequence(rng, 100), gesture_range=(10, 50), source_id="s", label=2)
    out = trim_gesture_positive(seq)
    assert len(out) == 40
    assert np.array_equal(out.points, seq.points[10:50])
    assert out.gesture_range is None and out.source_id == "s" and out.label == 2


def test_trim_full_range_is_identity(rng):
    seq = random_sequence(rng, 100)
    out = trim_gesture_positive(seq, (0, 100))
    assert np.array_equal(out.points, seq.points)
    assert np.array_equal(out.confidence, seq.confidence)


def test_trim_errors(rng):
    seq = random_sequence(rng, 100)
    with pytest.raises(RangeOutOfBounds):
        trim_gesture_positive(seq, (90, 120))
    with pytest.raises(MissingRange):
        trim_gesture_positive(seq)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 40), data=st.data())
def test_trim_length_and_order(n, data):
    start = data.draw(st.integers(0, n - 1))
    end = data.draw(st.integers(start + 1, n))
    seq = random_sequence(np.random.default_rng(n), n)
    out = trim_gesture_positive(seq, (start, end))
    assert len(out) == end - start
    assert np.array_equal(out.points, seq.points[start:end])


# ---- manifests

def write_dataset(tmp_path, counts, rng, ranges=None):
    entries = []
    (tmp_path / "seq").mkdir(exist_ok=True)
    for cls in GestureClass:
        for i in range(counts[int(cls)]):
            path = f"seq/{cls.slug}_{i}.json"
            (tmp_path / path).write_text(serialize_sequence(random_sequence(rng, 6)))
            entries.append(ManifestEntry(path, cls, ranges))
    text = DatasetManifest(entries).dumps()
    (tmp_path / "manifest.json").write_text(text)
    return text


def test_manifest_one_per_class(tmp_path, rng):
    text = write_dataset(tmp_path, (1, 1, 1, 1), rng, ranges=(1, 5))
    load = load_manifest(text, tmp_path)
    assert not load.errors
    assert [label for _, label in load.items] == list(GestureClass)
    assert all(len(seq) == 4 and seq.label == int(label) for seq, label in load.items)


def test_manifest_default_corpus_counts(tmp_path, rng):
    text = write_dataset(tmp_path, (53, 28, 48, 51), rng)
    load = load_manifest(text, tmp_path, n_jobs=4)
    counts = load.class_counts()
    assert [counts[c] for c in GestureClass] == [53, 28, 48, 51]
    # entries without a range stay whole
    assert all(len(seq) == 6 for seq, _ in load.items)
    serial = load_manifest(text, tmp_path)
    assert [s.source_id for s, _ in serial.items] == [s.source_id for s, _ in load.items]


def test_manifest_missing_file_is_named(tmp_path, rng):
    text = write_dataset(tmp_path, (1, 1, 1, 1), rng)
    (tmp_path / "seq" / "go_0.json").unlink()
    load = load_manifest(text, tmp_path)
    assert len(load.items) == 3
    assert [p for p, _ in load.errors] == ["seq/go_0.json"]
    with pytest.raises(ManifestError, match="seq/go_0.json"):
        load_manifest(text, tmp_path, fail_fast=True)


def test_manifest_schema_errors():
    base = {"schema_version": 1, "entries": [{"path": "a.json", "label": "stop"}] * 2}
    with pytest.raises(SchemaViolation, match="duplicate"):
        parse_manifest(json.dumps(base))
    base["entries"] = [{"path": "a.json", "label": "wave"}]
    with pytest.raises(SchemaViolation):
        parse_manifest(json.dumps(base))
    base["entries"] = [{"path": "a.json", "label": "go", "gesture_start": 4}]
    with pytest.raises(SchemaViolation):
        parse_manifest(json.dumps(base))
    with pytest.raises(VersionUnsupported):
        parse_manifest(json.dumps({"schema_version": 3, "entries": []}))


def test_manifest_round_trip_and_hash():
    m = DatasetManifest([ManifestEntry("a.json", GestureClass.GO, (0, 9))], 30.0, {"k": 1})
    text = m.dumps()
    again = parse_manifest(text)
    assert again.dumps() == text
    assert manifest_hash(text) == manifest_hash(text.encode())
    assert len(manifest_hash(text)) == 64
