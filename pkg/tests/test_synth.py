import numpy as np
import pytest

from pedgesture.features import FEATURE_NAMES, extract_feature_vector, feature_matrix
from pedgesture.forest import ForestParams, LabeledDataset, evaluate, stratified_split, train_forest
from pedgesture.ingest import load_manifest, parse_sequence_file, serialize_sequence
from pedgesture.labels import GestureClass
from pedgesture.skeleton import normalize_sequence
from pedgesture.synth import (
    PRIMITIVES,
    DEFAULT_COUNTS,
    SynthParams,
    generate_corpus,
    generate_sequence,
    primitive_names,
)

COL = {n: i for i, n in enumerate(FEATURE_NAMES)}
QUIET = SynthParams(noise_sigma=0.0)


def feats(seq):
    return extract_feature_vector(seq).values


def test_primitive_catalogue():
    assert primitive_names("stop") == ["overhead_raise_hold", "chest_extended_arm", "slow_vertical_wave"]
    assert primitive_names("go") == ["side_to_side_swing"]
    assert primitive_names("thank_greet") == ["head_level_raise", "near_head_wave", "chest_thumbs_up"]
    assert primitive_names("no_gesture") == ["idle_sway"]
    assert all(p.label is cls for cls, ps in PRIMITIVES.items() for p in ps)


@pytest.mark.parametrize("cls", list(GestureClass))
def test_determinism_and_frame_bounds(cls):
    params = SynthParams()
    for seed in range(6):
        a = generate_sequence(cls, params, seed)
        b = generate_sequence(cls, params, seed)
        assert np.array_equal(a.points, b.points) and np.array_equal(a.confidence, b.confidence)
        lo, hi = params.durations[int(cls)]
        assert params.fps * lo <= len(a) <= params.fps * hi
        assert a.label == int(cls) and a.gesture_range == (0, len(a))
        assert np.all((a.confidence >= 0.7) & (a.confidence <= 1.0))
    assert not np.array_equal(generate_sequence(cls, params, 0).points[:3],
                              generate_sequence(cls, params, 1).points[:3])


def test_left_arm_gestures_by_default():
    seq = generate_sequence("go", QUIET, 3)
    f = feats(seq)
    assert f[COL["vel_lw"]] > f[COL["vel_rw"]]
    right = generate_sequence("go", SynthParams(noise_sigma=0.0, handedness="right"), 3)
    g = feats(right)
    assert g[COL["vel_rw"]] > g[COL["vel_lw"]]


def test_near_head_wave_beats_idle():
    for seed in range(10):
        wave = feats(generate_sequence("thank_greet", QUIET, seed, primitive="near_head_wave"))
        idle = feats(generate_sequence("no_gesture", QUIET, seed))
        assert wave[COL["vel_lw"]] > idle[COL["vel_lw"]]
        assert wave[COL["max_y_left_wrist"]] > idle[COL["max_y_left_wrist"]]


def test_unknown_primitive_rejected():
    with pytest.raises(ValueError):
        generate_sequence("go", QUIET, 0, primitive="near_head_wave")


def test_class_means_pairwise_distinct():
    seqs, _ = generate_corpus(QUIET, counts=(12, 12, 12, 12), seed=5)
    X = feature_matrix(seqs)[:, [COL["vel_lw"], COL["max_y_left_wrist"], COL["dist_lw_rw"]]]
    y = np.array([s.label for s in seqs])
    means = np.array([X[y == c].mean(axis=0) for c in range(4)])
    for i in range(4):
        for j in range(i + 1, 4):
            assert np.all(np.abs(means[i] - means[j]) > 1e-3), (i, j, means)


def test_noise_degrades_accuracy():
    # same forest settings and seeds on corpora regenerated at each noise level
    acc = []
    for sigma in (0.0, 2.0, 10.0):
        seqs, _ = generate_corpus(SynthParams(noise_sigma=sigma), seed=0)
        data = LabeledDataset(feature_matrix(seqs), [s.label for s in seqs], [s.source_id for s in seqs])
        train, test = stratified_split(data, 0.3, seed=1)
        acc.append(evaluate(train_forest(train, ForestParams(n_trees=100, master_seed=3)), test).accuracy)
    assert acc[0] > acc[1] > acc[2], acc


def test_corpus_files(tmp_path):
    seqs, manifest = generate_corpus(SynthParams(), seed=7, out_dir=tmp_path / "a")
    assert len(seqs) == 180
    counts = manifest.class_counts()
    assert tuple(counts[c] for c in GestureClass) == DEFAULT_COUNTS
    files = sorted((tmp_path / "a" / "sequences").iterdir())
    assert len(files) == 180 and (tmp_path / "a" / "manifest.json").is_file()

    generate_corpus(SynthParams(), seed=7, out_dir=tmp_path / "b")
    for f in files:
        assert f.read_bytes() == (tmp_path / "b" / "sequences" / f.name).read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()

    load = load_manifest((tmp_path / "a" / "manifest.json").read_bytes(), tmp_path / "a")
    assert not load.errors and len(load.items) == 180
    for (loaded, _), orig in zip(load.items, seqs):
        assert np.array_equal(loaded.points, orig.points)
        assert len(loaded) >= 3
        normalize_sequence(loaded)  # torso never degenerate
    assert np.all(np.isfinite(feature_matrix([s for s, _ in load.items])))


def test_custom_counts_and_serialization():
    seqs, manifest = generate_corpus(SynthParams(), counts=(2, 1, 3, 1), seed=1)
    assert [e.label.slug for e in manifest.entries] == ["stop"] * 2 + ["go"] + ["thank_greet"] * 3 + ["no_gesture"]
    again = parse_sequence_file(serialize_sequence(seqs[0]))
    assert np.array_equal(again.points, seqs[0].points)
    with pytest.raises(ValueError):
        generate_corpus(SynthParams(), counts=(1, 0, 1, 1))


def test_params_validation():
    with pytest.raises(ValueError):
        SynthParams(noise_sigma=-1)
    with pytest.raises(ValueError):
        SynthParams(handedness="both")
    with pytest.raises(ValueError):
        SynthParams(confidence_range=(0.5, 1.2))
