import math

import numpy as np
import pytest

from distilldet import autodiff as ad
from distilldet import losses as ls
from distilldet.data import BatchPairing
from distilldet.errors import (ConfigError, DegenerateInputError, NumericalError,
                               StructuralError)


# --------------------------------------------------------------------------
# independent oracles (scalar python loops, no numpy vectorization)

def atomic_reference(student, teacher, pairing, phi, tau, normalize=True):
    def unit(v):
        n = math.sqrt(sum(float(x) * float(x) for x in v))
        return [float(x) / max(n, 1e-12) for x in v]

    def logh_terms(S, Tt, wrap):
        acc_pos, acc_neg = 0.0, 0.0
        for t in range(len(S)):
            s = unit(S[t]) if normalize else [float(v) for v in S[t]]
            u = Tt[t % len(Tt)] if wrap else Tt[t]
            u = unit(u) if normalize else [float(v) for v in u]
            x = sum(a * b for a, b in zip(s, u)) / tau
            h = math.exp(x) / (math.exp(x) + phi)
            acc_pos += math.log(h)
            acc_neg += math.log(1.0 - h)
        return acc_pos / len(S), acc_neg / len(S)

    pos = [logh_terms(student[i], teacher[i], wrap=False)[0] for i in pairing.positives]
    neg = [logh_terms(student[i], teacher[j], wrap=True)[1] for i, j in pairing.negatives]
    total = sum(pos) / len(pos)
    if neg:
        total += sum(neg) / len(neg)
    return -total


def covariance_reference(F):
    T, C = len(F), len(F[0])
    mu = [sum(F[t][c] for t in range(T)) / T for c in range(C)]
    out = [[0.0] * C for _ in range(C)]
    for a in range(C):
        for b in range(C):
            out[a][b] = sum((F[t][a] - mu[a]) * (F[t][b] - mu[b])
                            for t in range(T)) / (T - 1)
    return np.asarray(out)


def mask_reference(cov):
    C = len(cov)
    return [cov[a][b] for a in range(C) for b in range(a, C)]


def variation_reference(F):
    return [sum(F[t + 1]) - sum(F[t]) for t in range(len(F) - 1)]


def random_atomic_instance(seed):
    rng = np.random.default_rng(seed)
    P, N = int(rng.integers(1, 4)), int(rng.integers(0, 3))
    C = int(rng.integers(2, 6))
    student, teacher = {}, {}
    for i in range(P + N):
        ts = int(rng.integers(2, 7))
        if i < P:
            student[i] = rng.normal(size=(ts, C))
        teacher[i] = rng.normal(size=(int(rng.integers(2, 7)), C))
    for i in range(P):
        teacher[i] = rng.normal(size=(student[i].shape[0], C))
    negatives = [(int(rng.integers(P)), P + int(rng.integers(N)))
                 for _ in range(N * P)] if N else []
    pairing = BatchPairing(positives=list(range(P)), negatives=negatives,
                           n_per_positive=N)
    cfg = ls.AtomicConfig(phi=float(rng.uniform(0.05, 3.0)),
                          tau=float(rng.uniform(0.5, 2.0)))
    return student, teacher, pairing, cfg


# --------------------------------------------------------------------------
# atomic contrastive loss

def test_atomic_identical_unit_vectors_closed_form():
    v = np.array([[1.0, 0.0, 0.0]])
    pairing = BatchPairing(positives=[0], negatives=[], n_per_positive=0)
    cfg = ls.AtomicConfig(phi=1.0, tau=1.0)
    loss = ls.atomic_loss({0: v}, {0: v.copy()}, pairing, cfg)
    expected = -math.log(math.e / (math.e + 1.0))
    assert abs(float(loss.value) - expected) < 1e-15
    assert abs(expected - 0.3132616875182228) < 1e-15


def test_atomic_matches_reference_small():
    student, teacher, pairing, cfg = random_atomic_instance(0)
    got = float(ls.atomic_loss(student, teacher, pairing, cfg).value)
    want = atomic_reference({k: v.tolist() for k, v in student.items()},
                            {k: v.tolist() for k, v in teacher.items()},
                            pairing, cfg.phi, cfg.tau)
    assert abs(got - want) < 1e-12


def test_atomic_requires_positive_pair():
    with pytest.raises(DegenerateInputError):
        ls.atomic_loss({}, {}, BatchPairing([], [], 0),
                       ls.AtomicConfig(phi=1.0))


def test_atomic_length_mismatch_rejected():
    pairing = BatchPairing(positives=[0], negatives=[], n_per_positive=0)
    with pytest.raises(StructuralError):
        ls.atomic_loss({0: np.ones((3, 2))}, {0: np.ones((4, 2))}, pairing,
                       ls.AtomicConfig(phi=1.0))


def test_atomic_negative_wraps_shorter_teacher():
    rng = np.random.default_rng(3)
    student = {0: rng.normal(size=(5, 3))}
    teacher = {0: rng.normal(size=(5, 3)), 1: rng.normal(size=(2, 3))}
    pairing = BatchPairing(positives=[0], negatives=[(0, 1)], n_per_positive=1)
    cfg = ls.AtomicConfig(phi=0.5, tau=1.0)
    got = float(ls.atomic_loss(student, teacher, pairing, cfg).value)
    want = atomic_reference({0: student[0].tolist()},
                            {k: v.tolist() for k, v in teacher.items()},
                            pairing, cfg.phi, cfg.tau)
    assert abs(got - want) < 1e-12


# --------------------------------------------------------------------------
# channel covariance and its masked embedding

def test_covariance_constant_rows_is_zero():
    F = np.tile([[3.0, -1.0]], (4, 1))
    assert np.array_equal(ls.channel_covariance(F), np.zeros((2, 2)))


def test_covariance_hand_example():
    F = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal(ls.channel_covariance(F), [[4.0, 4.0], [4.0, 4.0]])


def test_covariance_needs_two_rows():
    with pytest.raises(DegenerateInputError):
        ls.channel_covariance(np.ones((1, 3)))


def test_cov_mask_hand_examples():
    assert np.array_equal(ls.cov_mask(np.full((2, 2), 4.0)), [4.0, 4.0, 4.0])
    assert np.array_equal(ls.cov_mask(np.eye(3)), [1.0, 0.0, 0.0, 1.0, 0.0, 1.0])


def test_cov_mask_rejects_asymmetry():
    with pytest.raises(NumericalError):
        ls.cov_mask(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_cov_mask_unmask_round_trip():
    rng = np.random.default_rng(1)
    F = rng.normal(size=(9, 4))
    cov = ls.channel_covariance(F)
    assert np.allclose(ls.cov_unmask(ls.cov_mask(cov), 4), cov)


def test_global_loss_zero_for_identical_features():
    F = np.random.default_rng(2).normal(size=(6, 3))
    assert float(ls.global_loss([F], [F.copy()]).value) == 0.0


def test_global_loss_mean_and_sum_modes():
    student = np.zeros((2, 2))                      # covariance embedding [0, 0, 0]
    a = 1.0 / math.sqrt(2.0)
    teacher = np.array([[a, a], [-a, -a]])          # covariance embedding [1, 1, 1]
    assert abs(float(ls.global_loss([student], [teacher], mode="mean").value) - 1.0) < 1e-12
    assert abs(float(ls.global_loss([student], [teacher], mode="sum").value) - 3.0) < 1e-12


def test_global_loss_unknown_mode():
    with pytest.raises(ConfigError):
        ls.global_loss([np.zeros((2, 2))], [np.zeros((2, 2))], mode="median")


# --------------------------------------------------------------------------
# variation signal and boundary loss

def test_variation_hand_example():
    F = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    per_step = ls.variation_signal(F, "per-step")
    assert np.array_equal(per_step.data, [4.0, 4.0])
    assert float(ls.variation_signal(F, "scalar").data) == 4.0


def test_variation_constant_is_zero():
    F = np.tile([[1.0, 1.0]], (5, 1))
    assert np.array_equal(ls.variation_signal(F, "per-step").data, np.zeros(4))
    assert float(ls.variation_signal(F, "scalar").data) == 0.0


def test_variation_scalar_telescopes():
    for seed in range(20):
        F = np.random.default_rng(seed).normal(size=(7, 3))
        scalar = float(ls.variation_signal(F, "scalar").data)
        closed = (F[-1].sum() - F[0].sum()) / (F.shape[0] - 1)
        assert abs(scalar - closed) < 1e-12


def test_variation_matches_reference():
    F = np.random.default_rng(4).normal(size=(6, 4))
    got = ls.variation_signal(F, "per-step").data
    assert np.max(np.abs(got - variation_reference(F.tolist()))) < 1e-12


def test_boundary_loss_zero_for_identical():
    F = np.random.default_rng(5).normal(size=(6, 3))
    assert float(ls.boundary_loss([F], [F.copy()]).value) == 0.0


def test_boundary_loss_hand_example():
    teacher = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])   # variation [4, 4]
    student = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])   # variation [0, 2]
    per_step = float(ls.boundary_loss([student], [teacher], mode="per-step").value)
    assert abs(per_step - 3.0) < 1e-15                         # (4 + 2) / 2
    scalar = float(ls.boundary_loss([student], [teacher], mode="scalar").value)
    assert abs(scalar - 3.0) < 1e-15                           # |4 - 1|


def test_boundary_mode_mismatch_rejected():
    F = np.ones((3, 2))
    with pytest.raises(StructuralError):
        ls._pair_l1(ls.variation_signal(F, "per-step"),
                    ls.variation_signal(F, "scalar"))


# --------------------------------------------------------------------------
# classification and total objective

def test_classification_closed_form():
    loss = ls.classification_loss(np.array([[1.0, -1.0]]), np.array([[1.0, 0.0]]))
    assert abs(float(loss.value) - math.log(1.0 + math.exp(-1.0))) < 1e-15


def test_classification_rejects_non_binary_labels():
    with pytest.raises(StructuralError):
        ls.classification_loss(np.zeros((2, 2)), np.full((2, 2), 0.5))


def test_classification_stable_at_large_logits():
    loss = ls.classification_loss(np.array([[1000.0, -1000.0]]),
                                  np.array([[1.0, 0.0]]))
    assert float(loss.value) == 0.0


def test_total_loss_vanilla_reduces_to_classification():
    w = ls.LossWeights(0.0, 0.0, 0.0)
    total = ls.total_loss(ad.constant(0.7), 5.0, 5.0, 5.0, w)
    assert float(total.value) == 0.7


def test_total_loss_weighted_sum():
    w = ls.LossWeights(300.0, 100.0, 5.0)
    total = ls.total_loss(0.5, 0.01, 0.002, 0.1, w)
    assert abs(float(total.value) - 4.2) < 1e-12


def test_loss_weights_defaults_and_validation():
    assert ls.LossWeights().as_tuple() == (300.0, 100.0, 5.0)
    with pytest.raises(ConfigError):
        ls.LossWeights(atomic=-1.0)
