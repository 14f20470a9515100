"""Finite-difference verification suites for every differentiable surface."""

import numpy as np

from . import autodiff as ad
from . import losses as ls
from . import model as md
from .data import BatchPairing


def _pvars_with(params, idx, var):
    """FilterVars with the idx-th declaration-order kernel replaced by ``var``."""
    pv = md.FilterVars(params)
    n = 2 * params.L + 2
    if idx == 0:
        pv.proj = var
    elif idx == n - 1:
        pv.classifier = var
    else:
        l, kind = divmod(idx - 1, 2)
        dil, pw = pv.layers[l]
        pv.layers[l] = (var, pw) if kind == 0 else (dil, var)
    return pv


def check_conv(seed, T=6, cin=3, cout=2, k=3, dilation=2):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(T, cin))
    w = rng.normal(size=(k, cin, cout))
    gy_weights = rng.normal(size=(T, cout))  # fixed projection to a scalar

    def f_input(v):
        return ad.reduce_sum(ad.mul(ad.dilated_conv1d(v, ad.constant(w), dilation),
                                    ad.constant(gy_weights)))

    def f_kernel(v):
        return ad.reduce_sum(ad.mul(ad.dilated_conv1d(ad.constant(x), v, dilation),
                                    ad.constant(gy_weights)))

    return max(ad.finite_diff_check(f_input, x), ad.finite_diff_check(f_kernel, w))


def check_filter(seed, L=3):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(3, 9))
    C = int(rng.integers(2, 7))
    din, K = 4, 2
    params = md.init_params(seed, din, C, K, L)
    x = rng.normal(size=(T, din))
    labels = rng.integers(0, 2, size=(T, K)).astype(np.float64)

    def loss_through(pvars, xvar):
        feats = md.forward_features(params, xvar, pvars)
        logits = md.classify(params, feats, pvars)
        return ls.classification_loss(logits, labels)

    def f_input(v):
        return loss_through(md.FilterVars(params), v)

    worst = ad.finite_diff_check(f_input, x)
    kernels = params.kernels_in_order()
    for idx, kern in enumerate(kernels):
        def f_kernel(v, idx=idx):
            return loss_through(_pvars_with(params, idx, v), ad.constant(x))

        worst = max(worst, ad.finite_diff_check(f_kernel, kern))
    return worst


def _random_batch(rng, P, N, T, C):
    student = {i: rng.normal(size=(T, C)) for i in range(P)}
    teacher = {i: rng.normal(size=(T, C)) for i in range(P + N)}
    negatives = [(i % P, P + i % N) for i in range(N * P)] if N else []
    return student, teacher, BatchPairing(positives=list(range(P)),
                                          negatives=negatives, n_per_positive=N)


def check_atomic(seed):
    rng = np.random.default_rng(seed)
    P = int(rng.integers(1, 4))
    T = int(rng.integers(3, 9))
    C = int(rng.integers(2, 7))
    student, teacher, pairing = _random_batch(rng, P, 1, T, C)
    cfg = ls.AtomicConfig(phi=float(rng.uniform(0.1, 2.0)), tau=float(rng.uniform(0.5, 2.0)))
    probe = student[0]

    def f(v):
        feats = dict(student)
        feats[0] = v
        feats.update({i: ad.constant(student[i]) for i in range(1, P)})
        return ls.atomic_loss(feats, teacher, pairing, cfg)

    return ad.finite_diff_check(f, probe)


def _check_pair_loss(seed, fn):
    rng = np.random.default_rng(seed)
    P = int(rng.integers(1, 4))
    T = int(rng.integers(3, 9))
    C = int(rng.integers(2, 7))
    student = [rng.normal(size=(T, C)) for _ in range(P)]
    teacher = [rng.normal(size=(T, C)) for _ in range(P)]

    def f(v):
        feats = [v] + [ad.constant(s) for s in student[1:]]
        return fn(feats, teacher)

    return ad.finite_diff_check(f, student[0])


def check_global(seed):
    return _check_pair_loss(seed, lambda s, t: ls.global_loss(s, t, mode="mean"))


def check_global_sum(seed):
    return _check_pair_loss(seed, lambda s, t: ls.global_loss(s, t, mode="sum"))


def check_boundary_per_step(seed):
    return _check_pair_loss(seed, lambda s, t: ls.boundary_loss(s, t, mode="per-step"))


def check_boundary_scalar(seed):
    return _check_pair_loss(seed, lambda s, t: ls.boundary_loss(s, t, mode="scalar"))


def check_classification(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(3, 9))
    K = int(rng.integers(2, 7))
    z = rng.normal(size=(T, K))
    y = rng.integers(0, 2, size=(T, K)).astype(np.float64)
    return ad.finite_diff_check(lambda v: ls.classification_loss(v, y), z)


SUITES = {
    "dilated_conv": check_conv,
    "temporal_filter": check_filter,
    "atomic_loss": check_atomic,
    "global_loss_mean": check_global,
    "global_loss_sum": check_global_sum,
    "boundary_loss_per_step": check_boundary_per_step,
    "boundary_loss_scalar": check_boundary_scalar,
    "classification_loss": check_classification,
}


def run_suites(seeds=range(10), tol=1e-6):
    """Max finite-difference error per suite over the given seeds."""
    results = {}
    for name, fn in SUITES.items():
        results[name] = max(fn(seed) for seed in seeds)
    return results, all(v < tol for v in results.values())
