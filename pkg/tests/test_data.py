import struct

import numpy as np
import pytest

from distilldet import data as dat
from distilldet.errors import ConfigError, FormatError, PairingError, StructuralError


def small_corpus(seed=0, n=12, **kw):
    cfg = dat.SyntheticConfig(seed=seed, num_videos=n, K=4, Din=8,
                              snippet_len_range=(10, 16), **kw)
    return dat.generate_synthetic_corpus(cfg)


# --------------------------------------------------------------------------
# dense labels

def test_dense_labels_empty():
    assert np.array_equal(dat.dense_labels_from_segments([], 4, 3),
                          np.zeros((4, 3), dtype=np.uint8))


def test_dense_labels_single_segment():
    labels = dat.dense_labels_from_segments([dat.SegmentLabel(0, 2, 4)], 5, 2)
    assert np.array_equal(labels[:, 0], [0, 0, 1, 1, 0])
    assert np.array_equal(labels[:, 1], np.zeros(5))


def test_dense_labels_overlap():
    segs = [dat.SegmentLabel(0, 0, 3), dat.SegmentLabel(1, 0, 3)]
    labels = dat.dense_labels_from_segments(segs, 5, 2)
    assert np.array_equal(labels[:3], np.ones((3, 2)))


def test_dense_labels_out_of_range():
    with pytest.raises(StructuralError):
        dat.dense_labels_from_segments([dat.SegmentLabel(0, 3, 9)], 5, 2)


# --------------------------------------------------------------------------
# synthetic generator

def test_corpus_deterministic():
    a, b = small_corpus(), small_corpus()
    for va, vb in zip(a, b):
        assert va.features["appearance"].tobytes() == vb.features["appearance"].tobytes()
        assert va.features["motion"].tobytes() == vb.features["motion"].tobytes()
        assert np.array_equal(va.labels, vb.labels)


def test_corpus_labels_consistent_with_segments():
    for v in small_corpus():
        rebuilt = dat.dense_labels_from_segments(v.segments, v.labels.shape[0],
                                                 v.labels.shape[1])
        assert np.array_equal(v.labels, rebuilt)


def test_boundary_snippets_carry_extra_motion_energy():
    noise = 1.0
    corpus = small_corpus(n=120, noise_scale=noise, boundary_amp=2.0 * noise)
    boundary_norms, interior_norms = [], []
    for v in corpus:
        marks = np.zeros(v.T, dtype=bool)
        for seg in v.segments:
            marks[min(seg.start // v.stride, v.T - 1)] = True
            marks[min((seg.end - 1) // v.stride, v.T - 1)] = True
        norms = np.linalg.norm(v.features["motion"], axis=1)
        boundary_norms.extend(norms[marks])
        interior_norms.extend(norms[~marks])
    assert np.mean(boundary_norms) > np.mean(interior_norms)


def test_config_validation():
    with pytest.raises(ConfigError):
        dat.SyntheticConfig(K=1)
    with pytest.raises(ConfigError):
        dat.SyntheticConfig(snippet_len_range=(1, 5))
    with pytest.raises(ConfigError):
        dat.SyntheticConfig(overlap_prob=1.5)
    with pytest.raises(ConfigError):
        dat.SyntheticConfig(modality_corr=-0.1)


# --------------------------------------------------------------------------
# persistence

def test_feature_round_trip(tmp_path):
    sample = small_corpus(n=1)[0]
    path = tmp_path / "video_00000.dsf"
    dat.save_features(path, sample)
    loaded = dat.load_features(path)
    assert loaded.id == sample.id
    assert loaded.stride == sample.stride
    assert sorted(loaded.features) == sorted(sample.features)
    for name in sample.features:
        assert loaded.features[name].tobytes() == sample.features[name].tobytes()
    assert np.array_equal(loaded.labels, sample.labels)
    assert loaded.segments == sample.segments


def test_feature_bad_magic(tmp_path):
    path = tmp_path / "bad.dsf"
    path.write_bytes(b"XXXX" + b"\x00" * 40)
    with pytest.raises(FormatError, match="DSF1"):
        dat.load_features(path)


def test_feature_rejects_short_sequences(tmp_path):
    path = tmp_path / "t0.dsf"
    path.write_bytes(dat.FEATURE_MAGIC + struct.pack("<6I", 1, 0, 4, 0, 2, 1))
    with pytest.raises(FormatError, match="T >= 2"):
        dat.load_features(path)


def test_feature_truncation(tmp_path):
    sample = small_corpus(n=1)[0]
    path = tmp_path / "video_00000.dsf"
    dat.save_features(path, sample)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(FormatError, match="offset"):
        dat.load_features(path)


# --------------------------------------------------------------------------
# batching

def test_make_batches_shapes():
    corpus = small_corpus(n=24)
    batches = dat.make_batches(corpus, B=16, N=1, seed=0)
    assert all(b.B == (b.n_per_positive + 1) * b.P for b in batches)
    assert batches[0].P == 8 and len(batches[0].negatives) == 8
    seen = [vid for b in batches for vid in b.positives]
    assert sorted(seen) == sorted(v.id for v in corpus)


def test_make_batches_negatives_differ_in_class_set():
    corpus = small_corpus(n=24)
    classes = {v.id: v.class_set for v in corpus}
    for b in dat.make_batches(corpus, B=8, N=1, seed=3):
        for i, j in b.negatives:
            assert classes[i] != classes[j]


def test_make_batches_deterministic():
    corpus = small_corpus(n=20)
    a = dat.make_batches(corpus, B=8, N=1, seed=5)
    b = dat.make_batches(corpus, B=8, N=1, seed=5)
    assert [x.positives for x in a] == [x.positives for x in b]
    assert [x.negatives for x in a] == [x.negatives for x in b]


def test_make_batches_divisibility():
    with pytest.raises(ConfigError):
        dat.make_batches(small_corpus(n=8), B=5, N=1, seed=0)


def test_make_batches_pairing_error_lists_ids():
    v = small_corpus(n=1)[0]
    twin = dat.VideoSample(id=v.id + 1, features=v.features, labels=v.labels,
                           segments=v.segments, stride=v.stride)
    with pytest.raises(PairingError, match=str(v.id)):
        dat.make_batches([v, twin], B=4, N=1, seed=0)


def test_default_phi():
    corpus = small_corpus(n=5)
    total = sum(v.T for v in corpus)
    assert dat.default_phi(corpus, 2) == 2 / total
    assert dat.default_phi(corpus, 0) == 1.0
