"""Distillation and classification losses.

All losses are differentiable w.r.t. the student side only: teacher inputs
are detached on entry, so a frozen teacher can never receive gradient.
Student inputs may be autodiff Vars (training) or plain arrays (inspection).
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .errors import ConfigError, DegenerateInputError, NumericalError, StructuralError

_NORM_FLOOR = 1e-12


@dataclass
class LossWeights:
    """Weights for the atomic, global-context and boundary terms."""
    atomic: float = 300.0
    global_ctx: float = 100.0
    boundary: float = 5.0

    def __post_init__(self):
        for name in ("atomic", "global_ctx", "boundary"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"loss weight {name} must be finite and >= 0, got {v}")

    def as_tuple(self):
        return (self.atomic, self.global_ctx, self.boundary)


@dataclass
class AtomicConfig:
    """Contrastive loss settings: phi is the negative-to-corpus snippet ratio."""
    phi: float
    tau: float = 1.0
    normalize: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.phi) and self.phi > 0):
            raise ConfigError(f"phi must be positive, got {self.phi}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigError(f"tau must be positive, got {self.tau}")


@dataclass
class VariationSignal:
    """Consecutive-snippet feature variation: per-step vector or its scalar mean."""
    mode: str  # "per-step" | "scalar"
    data: object  # Var or ndarray; length T-1 vector or scalar


def _as_var(x):
    return x if isinstance(x, ad.Var) else ad.constant(x)


def _l2norm_rows_var(v):
    sq = ad.reduce_sum(ad.mul(v, v), axis=1, keepdims=True)
    n = ad.sqrt(ad.clip_min(sq, _NORM_FLOOR ** 2))
    return ad.div(v, n)


def _l2norm_rows_np(a):
    n = np.maximum(np.sqrt((a * a).sum(axis=1, keepdims=True)), _NORM_FLOOR)
    return a / n


def _mean_of(terms):
    acc = terms[0]
    for t in terms[1:]:
        acc = ad.add(acc, t)
    return ad.scale(acc, 1.0 / len(terms))


def atomic_loss(student_feats, teacher_feats, pairing, cfg):
    """Contrastive snippet-level loss over positive and negative video pairs.

    ``student_feats`` / ``teacher_feats`` map video id -> (T, C) features.
    With h = e^{x} / (e^{x} + phi) and x the (scaled) snippet similarity,
    returns -[ mean over positive pairs of mean_t log h
             + mean over negative pairs of mean_t log(1 - h) ].
    For a negative pair the student snippet t is matched with teacher snippet
    t mod T_teacher.
    """
    if not pairing.positives:
        raise DegenerateInputError("atomic loss requires at least one positive pair")
    logphi = float(np.log(cfg.phi))

    def similarities(s_var, t_arr):
        sv = value_of(s_var)
        if sv.shape[1] != t_arr.shape[1]:
            raise StructuralError(
                f"channel mismatch between student {sv.shape} and teacher {t_arr.shape}"
            )
        s = _as_var(s_var)
        if cfg.normalize:
            s = _l2norm_rows_var(s)
            t_arr = _l2norm_rows_np(t_arr)
        dots = ad.reduce_sum(ad.mul(s, ad.constant(t_arr)), axis=1)
        return ad.scale(dots, 1.0 / cfg.tau)

    pos_terms = []
    for i in pairing.positives:
        s, t = student_feats[i], value_of(teacher_feats[i])
        if value_of(s).shape[0] != t.shape[0]:
            raise StructuralError(f"positive pair {i} has mismatched lengths")
        x = similarities(s, t)
        lse = ad.logaddexp_const(x, logphi)  # log(e^x + phi)
        pos_terms.append(ad.reduce_mean(ad.sub(x, lse)))  # mean_t log h

    neg_terms = []
    for (i, j) in pairing.negatives:
        s, t = student_feats[i], value_of(teacher_feats[j])
        ts = value_of(s).shape[0]
        t_aligned = t[np.arange(ts) % t.shape[0]]
        x = similarities(s, t_aligned)
        lse = ad.logaddexp_const(x, logphi)
        neg_terms.append(ad.reduce_mean(ad.add_const(ad.neg(lse), logphi)))  # mean_t log(1-h)

    total = _mean_of(pos_terms)
    if neg_terms:
        total = ad.add(total, _mean_of(neg_terms))
    return ad.neg(total)


def channel_covariance(F):
    """Unbiased channel covariance (C, C) of a (T, C) feature map over time."""
    if isinstance(F, ad.Var):
        T = F.shape[0]
        if T < 2:
            raise DegenerateInputError(f"covariance requires T >= 2, got T={T}")
        mu = ad.reduce_mean(F, axis=0, keepdims=True)
        xc = ad.sub(F, mu)
        return ad.scale(ad.matmul(ad.transpose(xc), xc), 1.0 / (T - 1))
    a = np.asarray(F, dtype=np.float64)
    T = a.shape[0]
    if T < 2:
        raise DegenerateInputError(f"covariance requires T >= 2, got T={T}")
    # Mirror the graph path operation-for-operation so that both produce
    # bitwise-identical values on identical inputs.
    xc = a - a.sum(axis=0, keepdims=True) * (1.0 / T)
    return (xc.T @ xc) * (1.0 / (T - 1))


def cov_mask(cov, tol=1e-9):
    """Row-major upper triangle (diagonal included) of a symmetric matrix."""
    v = value_of(cov)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise StructuralError(f"covariance must be square, got {v.shape}")
    asym = np.max(np.abs(v - v.T)) if v.size else 0.0
    if asym > tol:
        raise NumericalError(f"matrix asymmetry {asym:.3e} exceeds tolerance {tol:.1e}")
    C = v.shape[0]
    iu = np.triu_indices(C)
    flat = iu[0] * C + iu[1]
    if isinstance(cov, ad.Var):
        return ad.take_flat(cov, flat)
    return v.ravel()[flat]


def cov_unmask(vec, C):
    """Inverse of cov_mask via symmetry; plain-array utility."""
    v = np.asarray(value_of(vec), dtype=np.float64)
    if v.size != C * (C + 1) // 2:
        raise StructuralError(f"embedding length {v.size} != C(C+1)/2 for C={C}")
    out = np.zeros((C, C))
    iu = np.triu_indices(C)
    out[iu] = v
    out.T[iu] = v
    return out


def global_loss(student_feats, teacher_feats, mode="mean"):
    """Distance between teacher and student channel-covariance embeddings.

    The lists are aligned over the positive videos. ``mode='mean'`` averages
    squared entry differences; ``mode='sum'`` is the literal squared norm.
    """
    if mode not in ("mean", "sum"):
        raise ConfigError(f"unknown global-loss mode {mode!r}")
    if len(student_feats) != len(teacher_feats) or not student_feats:
        raise StructuralError("student/teacher positive lists must align and be non-empty")
    terms = []
    for s, t in zip(student_feats, teacher_feats):
        gs = cov_mask(channel_covariance(_as_var(s)))
        gt = cov_mask(channel_covariance(value_of(t)))
        if gs.value.size != gt.size:
            raise StructuralError("embedding length mismatch between student and teacher")
        diff = ad.sub(gs, ad.constant(gt))
        sq = ad.mul(diff, diff)
        terms.append(ad.reduce_mean(sq) if mode == "mean" else ad.reduce_sum(sq))
    return _mean_of(terms)


def variation_signal(F, mode="per-step"):
    """Summed-over-channels variation between consecutive snippets.

    per-step: v(t) = sum_c F(t+1, c) - F(t, c), t in [0, T-2];
    scalar: mean of the per-step entries (telescopes to last-minus-first).
    """
    if mode not in ("per-step", "scalar"):
        raise ConfigError(f"unknown variation mode {mode!r}")
    T = value_of(F).shape[0]
    if T < 2:
        raise DegenerateInputError(f"variation requires T >= 2, got T={T}")
    if isinstance(F, ad.Var):
        diff = ad.sub(ad.rows(F, 1, T), ad.rows(F, 0, T - 1))
        v = ad.reduce_sum(diff, axis=1)
        data = ad.reduce_mean(v) if mode == "scalar" else v
    else:
        a = np.asarray(F, dtype=np.float64)
        v = (a[1:] - a[:-1]).sum(axis=1)
        data = v.mean() if mode == "scalar" else v
    return VariationSignal(mode=mode, data=data)


def _pair_l1(sig_s, sig_t):
    if sig_s.mode != sig_t.mode:
        raise StructuralError(f"variation mode mismatch: {sig_s.mode} vs {sig_t.mode}")
    diff = ad.sub(_as_var(sig_s.data), ad.constant(value_of(sig_t.data)))
    absdiff = ad.absolute(diff)
    if sig_s.mode == "per-step":
        return ad.reduce_mean(absdiff)
    return absdiff


def boundary_loss(student_feats, teacher_feats, mode="per-step"):
    """L1 distance between teacher and student variation signals over positives."""
    if len(student_feats) != len(teacher_feats) or not student_feats:
        raise StructuralError("student/teacher positive lists must align and be non-empty")
    terms = []
    for s, t in zip(student_feats, teacher_feats):
        if value_of(s).shape[0] != value_of(t).shape[0]:
            raise StructuralError("boundary loss requires equal lengths per pair")
        terms.append(_pair_l1(variation_signal(_as_var(s), mode),
                              variation_signal(value_of(t), mode)))
    return _mean_of(terms)


def classification_loss(logits, labels):
    """Mean multi-label binary cross-entropy from logits, in stable softplus form."""
    y = np.asarray(labels, dtype=np.float64)
    z = _as_var(logits)
    if z.shape != y.shape:
        raise StructuralError(f"logits {z.shape} and labels {y.shape} differ in shape")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise StructuralError("labels must be binary")
    # -[y log sig(z) + (1-y) log(1-sig(z))] == softplus(z) - y*z
    per_cell = ad.sub(ad.softplus(z), ad.mul(z, ad.constant(y)))
    return ad.reduce_mean(per_cell)


def total_loss(cls, atomic, global_ctx, boundary, weights):
    """Weighted joint objective: cls + a1*atomic + a2*global + a3*boundary."""
    a1, a2, a3 = weights.as_tuple()
    total = _as_var(cls)
    for w, term in ((a1, atomic), (a2, global_ctx), (a3, boundary)):
        if not np.isfinite(float(value_of(term))):
            raise NumericalError("non-finite loss component")
        total = ad.add(total, ad.scale(_as_var(term), w))
    return total
