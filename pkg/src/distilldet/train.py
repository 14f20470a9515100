"""Two-phase training: teacher on classification only, then frozen-teacher
student distillation with the joint objective."""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as dat
from . import losses as ls
from . import model as md
from .errors import ConfigError, NumericalError, StructuralError
from .optim import AdamState, PlateauScheduler, adam_step


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 8
    negatives: int = 1
    lr: float = 0.001
    plateau_factor: float = 0.3
    patience: int = 10
    weights: ls.LossWeights = field(default_factory=ls.LossWeights)
    tau: float = 1.0
    phi: float = 0.0          # 0 -> derived from the training corpus
    normalize_atomic: bool = True
    global_mode: str = "mean"
    boundary_mode: str = "per-step"
    seed: int = 0
    val_fraction: float = 0.2
    C: int = 32
    L: int = 5

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.negatives < 0:
            raise ConfigError("epochs >= 0, batch_size >= 1, negatives >= 0 required")
        if not (0.0 < self.plateau_factor < 1.0) or self.patience < 1:
            raise ConfigError("plateau factor must be in (0,1) and patience >= 1")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigError("val_fraction must be in [0, 1)")


LOG_COLUMNS = ("epoch", "l_cls", "l_atomic", "l_global", "l_boundary",
               "l_total", "val_loss", "lr", "seconds")


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def append(self, **kw):
        self.rows.append({c: kw[c] for c in LOG_COLUMNS})

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for row in self.rows:
                w.writerow([row["epoch"]] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])


def snippet_labels(video):
    """Ground-truth labels pooled to snippet resolution (max over each window)."""
    T = video.T
    K = video.labels.shape[1]
    return video.labels.reshape(T, video.stride, K).max(axis=1).astype(np.float64)


def bce_np(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def split_corpus(corpus, val_fraction, seed):
    """Seeded shuffle; the first round(frac*n) videos become the validation set."""
    rng = np.random.default_rng([seed, 3])
    order = rng.permutation(len(corpus))
    n_val = int(round(val_fraction * len(corpus)))
    val = [corpus[i] for i in order[:n_val]]
    train = [corpus[i] for i in order[n_val:]]
    if not train:
        raise ConfigError("validation split leaves no training videos")
    return train, val


def _validation_loss(params, videos, modality):
    total, count = 0.0, 0
    for v in videos:
        feats = md.forward_features_np(params, v.features[modality])
        logits = md.classify_np(params, feats)
        total += bce_np(logits, snippet_labels(v))
        count += 1
    return total / count if count else np.nan


def _teacher_bytes(teachers):
    return [b"".join(k.tobytes() for k in tp.kernels_in_order()) for tp, _ in teachers]


def _train_loop(corpus, modality, teachers, cfg, student_role):
    if not corpus:
        raise ConfigError("empty corpus")
    sample = corpus[0]
    if modality not in sample.features:
        raise ConfigError(f"modality {modality!r} absent from corpus")
    din = sample.features[modality].shape[1]
    K = sample.labels.shape[1]
    for tp, tmod in teachers:
        if tp.C != cfg.C:
            raise StructuralError(
                f"teacher channel size {tp.C} != student channel size {cfg.C}"
            )
        if tmod not in sample.features:
            raise ConfigError(f"teacher modality {tmod!r} absent from corpus")

    train_videos, val_videos = split_corpus(corpus, cfg.val_fraction, cfg.seed)
    by_id = {v.id: v for v in corpus}

    params = md.init_params(cfg.seed, din, cfg.C, K, cfg.L, role=student_role)
    state = AdamState.init(params.kernels_in_order(), lr=cfg.lr)
    sched = PlateauScheduler(cfg.lr, cfg.plateau_factor, cfg.patience)

    w = cfg.weights
    distilling = bool(teachers) and any(x > 0 for x in w.as_tuple())
    phi = cfg.phi if cfg.phi > 0 else dat.default_phi(train_videos, max(cfg.negatives, 1))
    atomic_cfg = ls.AtomicConfig(phi=phi, tau=cfg.tau, normalize=cfg.normalize_atomic)

    frozen = _teacher_bytes(teachers)
    log = TrainLog()
    best_val = np.inf
    best_params = params.copy()

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        batches = dat.make_batches(train_videos, cfg.batch_size, cfg.negatives,
                                   seed=[cfg.seed, 2, epoch])
        sums = {"l_cls": 0.0, "l_atomic": 0.0, "l_global": 0.0,
                "l_boundary": 0.0, "l_total": 0.0}
        for batch in batches:
            pvars = md.FilterVars(params)
            pos_feats, cls_terms = {}, []
            for vid in batch.positives:
                video = by_id[vid]
                F = md.forward_features(params, video.features[modality], pvars)
                logits = md.classify(params, F, pvars)
                cls_terms.append(ls.classification_loss(logits, snippet_labels(video)))
                pos_feats[vid] = F
            cls = ls._mean_of(cls_terms)
            total = cls
            comp = {"l_atomic": 0.0, "l_global": 0.0, "l_boundary": 0.0}
            if distilling:
                needed = set(batch.positives) | {j for _, j in batch.negatives}
                for tparams, tmod in teachers:
                    tfeats = {vid: md.forward_features_np(tparams, by_id[vid].features[tmod])
                              for vid in needed}
                    s_pos = [pos_feats[i] for i in batch.positives]
                    t_pos = [tfeats[i] for i in batch.positives]
                    if w.atomic > 0:
                        at = ls.atomic_loss(pos_feats, tfeats, batch, atomic_cfg)
                        comp["l_atomic"] += float(at.value)
                        total = ad.add(total, ad.scale(at, w.atomic))
                    if w.global_ctx > 0:
                        gl = ls.global_loss(s_pos, t_pos, mode=cfg.global_mode)
                        comp["l_global"] += float(gl.value)
                        total = ad.add(total, ad.scale(gl, w.global_ctx))
                    if w.boundary > 0:
                        bd = ls.boundary_loss(s_pos, t_pos, mode=cfg.boundary_mode)
                        comp["l_boundary"] += float(bd.value)
                        total = ad.add(total, ad.scale(bd, w.boundary))
            if not np.isfinite(total.value):
                raise NumericalError(f"non-finite training loss at epoch {epoch}")
            ad.backward(total)
            state.lr = sched.lr
            adam_step(params.kernels_in_order(), pvars.grads(), state)
            sums["l_cls"] += float(cls.value)
            sums["l_total"] += float(total.value)
            for k, v in comp.items():
                sums[k] += v
        nb = len(batches)
        val_loss = _validation_loss(params, val_videos or train_videos, modality)
        lr_now = sched.step(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
        for blob, (tp, _) in zip(frozen, teachers):
            if blob != b"".join(k.tobytes() for k in tp.kernels_in_order()):
                raise NumericalError("frozen teacher parameters changed during training")
        log.append(epoch=epoch, l_cls=sums["l_cls"] / nb, l_atomic=sums["l_atomic"] / nb,
                   l_global=sums["l_global"] / nb, l_boundary=sums["l_boundary"] / nb,
                   l_total=sums["l_total"] / nb, val_loss=val_loss, lr=lr_now,
                   seconds=time.perf_counter() - t0)
    return best_params if cfg.epochs > 0 else params, log


def train_teacher(corpus, modality, cfg):
    """Train a teacher with the classification loss only; returns (params, log)."""
    return _train_loop(corpus, modality, [], cfg, student_role="teacher")


def train_student(corpus, teachers, cfg, student_modality="appearance"):
    """Distill one or more frozen teachers into a student on its own modality.

    ``teachers``: list of (TemporalFilterParams, modality-name). Distillation
    terms are computed per teacher and summed with shared weights.
    """
    return _train_loop(corpus, student_modality, list(teachers), cfg,
                       student_role="student")
