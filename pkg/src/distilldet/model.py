"""Dilated-residual temporal filter and classifier head.

The filter stacks an input projection, L residual layers (3-tap dilated
convolution with dilation 2^l, ReLU, pointwise projection, skip connection)
and a pointwise classifier. Teacher and student instantiate the same
architecture on different input modalities. All kernels are bias-free.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import FormatError, StructuralError

CHECKPOINT_MAGIC = b"DSQ1"


@dataclass
class TemporalFilterParams:
    proj: np.ndarray                 # (Din, C) input projection
    layers: list                     # per layer: (dilated (3, C, C), pointwise (C, C))
    classifier: np.ndarray           # (C, K)
    role: str = "student"

    @property
    def L(self):
        return len(self.layers)

    @property
    def C(self):
        return self.proj.shape[1]

    @property
    def K(self):
        return self.classifier.shape[1]

    @property
    def Din(self):
        return self.proj.shape[0]

    @property
    def dilations(self):
        return [2 ** l for l in range(self.L)]

    def fingerprint(self):
        """Architecture identity: (L, C, dilations); shared by teacher and student."""
        return (self.L, self.C, tuple(self.dilations))

    def kernels_in_order(self):
        """Declaration order used by Adam state and the checkpoint format."""
        out = [self.proj]
        for dil, pw in self.layers:
            out.append(dil)
            out.append(pw)
        out.append(self.classifier)
        return out

    def num_params(self):
        return sum(k.size for k in self.kernels_in_order())

    def copy(self):
        return TemporalFilterParams(
            proj=self.proj.copy(),
            layers=[(d.copy(), p.copy()) for d, p in self.layers],
            classifier=self.classifier.copy(),
            role=self.role,
        )


@dataclass
class FeatureSequence:
    """Pre-classifier feature map of one video for one role."""
    role: str
    video_id: int
    data: object  # (T, C) Var during training, ndarray otherwise

    @property
    def T(self):
        return ad.value_of(self.data).shape[0]


def init_params(seed, Din, C, K, L=5, role="student"):
    """Uniform(-b, b) kernels with b = sqrt(1/fan_in), deterministic per seed."""
    if min(Din, C, K, L) < 1:
        raise StructuralError("all dimensions must be positive")
    rng = np.random.default_rng(seed)

    def u(fan_in, shape):
        b = np.sqrt(1.0 / fan_in)
        return rng.uniform(-b, b, size=shape)

    proj = u(Din, (Din, C))
    layers = [(u(3 * C, (3, C, C)), u(C, (C, C))) for _ in range(L)]
    classifier = u(C, (C, K))
    return TemporalFilterParams(proj=proj, layers=layers, classifier=classifier, role=role)


def zero_params(Din, C, K, L=5, role="student"):
    return TemporalFilterParams(
        proj=np.zeros((Din, C)),
        layers=[(np.zeros((3, C, C)), np.zeros((C, C))) for _ in range(L)],
        classifier=np.zeros((C, K)),
        role=role,
    )


def receptive_field_radius(L):
    return 1 + sum(2 ** l for l in range(L))


class FilterVars:
    """Parameter leaves of one forward/backward pass, in declaration order."""

    def __init__(self, params):
        self.params = params
        self.proj = ad.Var(params.proj)
        self.layers = [(ad.Var(d), ad.Var(p)) for d, p in params.layers]
        self.classifier = ad.Var(params.classifier)

    def leaves(self):
        out = [self.proj]
        for d, p in self.layers:
            out.append(d)
            out.append(p)
        out.append(self.classifier)
        return out

    def grads(self):
        return [leaf.grad for leaf in self.leaves()]


def forward_features(params, x, pvars=None):
    """Run the temporal filter; returns the (T, C) pre-classifier feature map.

    ``pvars`` (a FilterVars) makes kernels gradient targets; without it the
    kernels enter the graph as constants (inference / frozen teacher).
    """
    xv = ad.value_of(x)
    if xv.ndim != 2 or xv.shape[1] != params.Din:
        raise StructuralError(
            f"input must be (T, {params.Din}), got {xv.shape}"
        )
    if pvars is None:
        proj = ad.constant(params.proj)
        layers = [(ad.constant(d), ad.constant(p)) for d, p in params.layers]
    else:
        proj, layers = pvars.proj, pvars.layers
    xn = x if isinstance(x, ad.Var) else ad.constant(xv)
    y = ad.matmul(xn, proj)
    for l, (dil, pw) in enumerate(layers):
        h = ad.dilated_conv1d(y, dil, 2 ** l)
        y = ad.add(y, ad.matmul(ad.relu(h), pw))
    return y


def classify(params, feats, pvars=None):
    """Per-snippet multi-label logits (T, K) from the feature map."""
    fv = ad.value_of(feats)
    if fv.shape[1] != params.C:
        raise StructuralError(f"feature map has {fv.shape[1]} channels, expected {params.C}")
    w = pvars.classifier if pvars is not None else ad.constant(params.classifier)
    f = feats if isinstance(feats, ad.Var) else ad.constant(fv)
    return ad.matmul(f, w)


def forward_features_np(params, x):
    """Graph-free forward pass (frozen teacher, evaluation)."""
    from . import kernels
    y = np.asarray(x, dtype=np.float64) @ params.proj
    for l, (dil, pw) in enumerate(params.layers):
        h = kernels.conv1d_forward(y, dil, 2 ** l)
        y = y + np.maximum(h, 0.0) @ pw
    return y


def classify_np(params, feats):
    return np.asarray(feats, dtype=np.float64) @ params.classifier


def upsample_logits(logits, target_len):
    """Linear interpolation along time to ``target_len`` rows, endpoints pinned."""
    z = np.asarray(ad.value_of(logits), dtype=np.float64)
    T = z.shape[0]
    if target_len < T:
        raise StructuralError(f"cannot downsample logits from {T} to {target_len}")
    if target_len == T:
        return z
    src = np.arange(T, dtype=np.float64)
    dst = np.linspace(0.0, T - 1.0, target_len)
    return np.stack([np.interp(dst, src, z[:, k]) for k in range(z.shape[1])], axis=1)


def save_checkpoint(path, params):
    """Binary checkpoint: magic, (L, C, K, Din) as u32-LE, kernels as f64-LE."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<4I", params.L, params.C, params.K, params.Din))
        for k in params.kernels_in_order():
            fh.write(np.ascontiguousarray(k, dtype="<f8").tobytes())


def load_checkpoint(path, role="teacher"):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(
            f"bad checkpoint magic {blob[:4]!r} at offset 0, expected {CHECKPOINT_MAGIC!r}"
        )
    if len(blob) < 20:
        raise FormatError(f"truncated checkpoint header at offset {len(blob)}")
    L, C, K, Din = struct.unpack_from("<4I", blob, 4)
    params = zero_params(Din, C, K, L, role=role)
    offset = 20
    kernels = params.kernels_in_order()
    for k in kernels:
        nbytes = k.size * 8
        if offset + nbytes > len(blob):
            raise FormatError(f"truncated checkpoint payload at offset {offset}")
        k[...] = np.frombuffer(blob, dtype="<f8", count=k.size, offset=offset).reshape(k.shape)
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"trailing bytes in checkpoint at offset {offset}")
    return params
