import numpy as np
import pytest

from distilldet import data as dat
from distilldet import model as md
from distilldet import train as tr
from distilldet.errors import ConfigError
from distilldet.losses import LossWeights


def tiny_corpus(seed=0, n=12):
    cfg = dat.SyntheticConfig(seed=seed, num_videos=n, K=4, Din=8,
                              snippet_len_range=(8, 12))
    return dat.generate_synthetic_corpus(cfg)


def tiny_config(**kw):
    defaults = dict(epochs=2, batch_size=4, negatives=1, C=6, L=2, seed=0,
                    val_fraction=0.25)
    defaults.update(kw)
    return tr.TrainConfig(**defaults)


def kernels_bytes(params):
    return b"".join(k.tobytes() for k in params.kernels_in_order())


def test_snippet_labels_max_pool_over_stride():
    labels = np.array([[0, 1], [1, 0], [0, 0], [0, 1]], dtype=np.uint8)
    video = dat.VideoSample(id=0, features={"appearance": np.zeros((2, 3))},
                            labels=labels, segments=[], stride=2)
    assert np.array_equal(tr.snippet_labels(video), [[1.0, 1.0], [0.0, 1.0]])


def test_split_corpus_deterministic_and_disjoint():
    corpus = tiny_corpus()
    t1, v1 = tr.split_corpus(corpus, 0.25, seed=0)
    t2, v2 = tr.split_corpus(corpus, 0.25, seed=0)
    assert [v.id for v in t1] == [v.id for v in t2]
    assert [v.id for v in v1] == [v.id for v in v2]
    assert len(v1) == 3 and len(t1) == 9
    assert not set(v.id for v in t1) & set(v.id for v in v1)
    with pytest.raises(ConfigError):
        tr.split_corpus(corpus[:1], 0.9, seed=0)


def test_zero_epochs_returns_initialization():
    corpus = tiny_corpus()
    cfg = tiny_config(epochs=0)
    params, log = tr.train_teacher(corpus, "motion", cfg)
    init = md.init_params(cfg.seed, 8, cfg.C, 4, cfg.L, role="teacher")
    assert kernels_bytes(params) == kernels_bytes(init)
    assert log.rows == []


def test_teacher_training_reduces_loss():
    corpus = tiny_corpus(n=16)
    params, log = tr.train_teacher(corpus, "motion", tiny_config(epochs=6))
    assert log.rows[-1]["l_cls"] < log.rows[0]["l_cls"]


def test_student_training_runs_and_logs_components():
    corpus = tiny_corpus(n=12)
    cfg = tiny_config(weights=LossWeights(0.3, 0.015, 0.002))
    teacher, _ = tr.train_teacher(corpus, "motion", tiny_config(epochs=1))
    params, log = tr.train_student(corpus, [(teacher, "motion")], cfg)
    assert len(log.rows) == cfg.epochs
    row = log.rows[0]
    assert row["l_atomic"] > 0 and row["l_global"] > 0 and row["l_boundary"] > 0
    assert row["l_total"] > row["l_cls"]


def test_teacher_frozen_during_student_training():
    corpus = tiny_corpus(n=12)
    teacher, _ = tr.train_teacher(corpus, "motion", tiny_config(epochs=1))
    before = kernels_bytes(teacher)
    tr.train_student(corpus, [(teacher, "motion")], tiny_config(
        weights=LossWeights(0.3, 0.015, 0.002)))
    assert kernels_bytes(teacher) == before


def test_two_identical_teachers_double_distillation_terms():
    # One batch spanning the whole training set so the first logged epoch is
    # a pure function of the initialization.
    corpus = tiny_corpus(n=4)
    teacher, _ = tr.train_teacher(corpus, "motion", tiny_config(
        epochs=1, val_fraction=0.0))
    cfg = tiny_config(epochs=1, batch_size=8, negatives=1, val_fraction=0.0,
                      weights=LossWeights(0.3, 0.015, 0.002))
    _, single = tr.train_student(corpus, [(teacher, "motion")], cfg)
    _, double = tr.train_student(corpus, [(teacher, "motion"), (teacher, "motion")], cfg)
    for key in ("l_atomic", "l_global", "l_boundary"):
        assert double.rows[0][key] == 2.0 * single.rows[0][key]
    assert double.rows[0]["l_cls"] == single.rows[0]["l_cls"]


def test_vanilla_student_identical_to_classification_only_loop():
    corpus = tiny_corpus(n=12)
    cfg = tiny_config(weights=LossWeights(0.0, 0.0, 0.0))
    teacher, _ = tr.train_teacher(corpus, "motion", tiny_config(epochs=1))
    student, slog = tr.train_student(corpus, [(teacher, "motion")], cfg,
                                     student_modality="appearance")
    plain, plog = tr._train_loop(corpus, "appearance", [], cfg, "student")
    assert kernels_bytes(student) == kernels_bytes(plain)
    for a, b in zip(slog.rows, plog.rows):
        assert all(a[c] == b[c] for c in tr.LOG_COLUMNS if c != "seconds")


def test_training_deterministic_across_runs():
    corpus = tiny_corpus(n=12)
    cfg = tiny_config(weights=LossWeights(0.3, 0.015, 0.002))
    teacher, _ = tr.train_teacher(corpus, "motion", tiny_config(epochs=1))
    p1, l1 = tr.train_student(corpus, [(teacher, "motion")], cfg)
    p2, l2 = tr.train_student(corpus, [(teacher, "motion")], cfg)
    assert kernels_bytes(p1) == kernels_bytes(p2)
    for a, b in zip(l1.rows, l2.rows):
        assert all(a[c] == b[c] for c in tr.LOG_COLUMNS if c != "seconds")


def test_log_csv_round_trip(tmp_path):
    corpus = tiny_corpus(n=8)
    _, log = tr.train_teacher(corpus, "motion", tiny_config(epochs=2))
    path = tmp_path / "log.csv"
    log.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ",".join(tr.LOG_COLUMNS)
    assert len(lines) == 3
    assert float(lines[1].split(",")[1]) == log.rows[0]["l_cls"]


def test_missing_modality_rejected():
    with pytest.raises(ConfigError):
        tr.train_teacher(tiny_corpus(n=4), "aux2", tiny_config())


def test_channel_mismatch_between_teacher_and_student():
    corpus = tiny_corpus(n=8)
    teacher, _ = tr.train_teacher(corpus, "motion", tiny_config(epochs=0, C=5))
    from distilldet.errors import StructuralError
    with pytest.raises(StructuralError):
        tr.train_student(corpus, [(teacher, "motion")], tiny_config(C=6))


def test_train_config_validation():
    with pytest.raises(ConfigError):
        tr.TrainConfig(epochs=-1)
    with pytest.raises(ConfigError):
        tr.TrainConfig(plateau_factor=1.5)
    with pytest.raises(ConfigError):
        tr.TrainConfig(val_fraction=1.0)
