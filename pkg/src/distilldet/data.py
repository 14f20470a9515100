"""Synthetic multi-modal untrimmed-video corpus, persistence and batching.

Each video carries two feature modalities standing in for encoded streams:

* ``appearance``: sum of active-class embeddings + slow sinusoidal drift + noise
  (the student's deployment modality, deliberately the harder one);
* ``motion``: sum of active-class embeddings + additive pulses at segment
  boundaries + noise (the privileged teacher modality).

Ground truth is a dense frame-level multi-label matrix derived from sampled,
possibly overlapping action segments.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, PairingError, StructuralError

FEATURE_MAGIC = b"DSF1"
MODALITY_NAMES = ("appearance", "motion", "aux2", "aux3")


@dataclass
class SegmentLabel:
    """One action instance: class k over half-open frame interval [start, end)."""
    k: int
    start: int
    end: int


@dataclass
class VideoSample:
    id: int
    features: dict            # modality name -> (T, Din) float64
    labels: np.ndarray        # (Tgt, K) uint8
    segments: list            # of SegmentLabel
    stride: int = 1

    @property
    def T(self):
        return next(iter(self.features.values())).shape[0]

    @property
    def class_set(self):
        return frozenset(s.k for s in self.segments)


@dataclass
class BatchPairing:
    """Positive (same-video) and negative (differing-class-set) pair assignments."""
    positives: list           # video ids
    negatives: list           # (student id, teacher id) tuples
    n_per_positive: int

    @property
    def P(self):
        return len(self.positives)

    @property
    def B(self):
        return (self.n_per_positive + 1) * self.P


@dataclass
class SyntheticConfig:
    seed: int = 0
    num_videos: int = 200
    K: int = 8
    snippet_len_range: tuple = (30, 60)
    Din: int = 64
    class_scale: float = 1.0
    noise_scale: float = 1.0
    boundary_amp: float = 2.0
    overlap_prob: float = 0.3
    stride: int = 1
    drift_scale: float = 1.0
    modality_corr: float = 0.7  # correlation between a class's appearance and motion embeddings

    def __post_init__(self):
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        lo, hi = self.snippet_len_range
        if not (2 <= lo <= hi):
            raise ConfigError(f"bad snippet length range {self.snippet_len_range}")
        for name in ("class_scale", "noise_scale", "boundary_amp", "drift_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not (0.0 <= self.overlap_prob <= 1.0):
            raise ConfigError("overlap_prob must be in [0, 1]")
        if not (0.0 <= self.modality_corr <= 1.0):
            raise ConfigError("modality_corr must be in [0, 1]")
        if self.stride < 1 or self.num_videos < 1 or self.Din < 1:
            raise ConfigError("stride, num_videos and Din must be positive")


def dense_labels_from_segments(segments, length, K):
    """(length, K) binary matrix; cell (t, k) = 1 iff a class-k segment covers t."""
    out = np.zeros((length, K), dtype=np.uint8)
    for seg in segments:
        if not (0 <= seg.start < seg.end <= length) or not (0 <= seg.k < K):
            raise StructuralError(
                f"segment (k={seg.k}, [{seg.start}, {seg.end})) out of range for "
                f"length={length}, K={K}"
            )
        out[seg.start:seg.end, seg.k] = 1
    return out


def _sample_segments(rng, cfg, total_frames):
    n_segs = int(rng.integers(2, 7))
    segments, covered = [], np.zeros(total_frames, dtype=bool)
    for _ in range(n_segs):
        k = int(rng.integers(cfg.K))
        max_len = max(2 * cfg.stride, total_frames // 2)
        length = int(rng.integers(2 * cfg.stride, max_len + 1))
        length = min(length, total_frames)
        # A few placement attempts to honour the overlap probability best-effort.
        start = int(rng.integers(0, total_frames - length + 1))
        if rng.random() >= cfg.overlap_prob:
            for _ in range(8):
                if not covered[start:start + length].any():
                    break
                start = int(rng.integers(0, total_frames - length + 1))
        covered[start:start + length] = True
        segments.append(SegmentLabel(k=k, start=start, end=start + length))
    return segments


def _generate_video(cfg, vid, emb_app, emb_mot, pulse_dirs, drift_basis):
    rng = np.random.default_rng([cfg.seed, 1, vid])
    T = int(rng.integers(cfg.snippet_len_range[0], cfg.snippet_len_range[1] + 1))
    total_frames = T * cfg.stride
    segments = _sample_segments(rng, cfg, total_frames)
    labels = dense_labels_from_segments(segments, total_frames, cfg.K)

    # Snippet-level activity: class active if it covers any frame of the snippet.
    active = labels.reshape(T, cfg.stride, cfg.K).max(axis=1).astype(np.float64)
    base_app = active @ emb_app
    base_mot = active @ emb_mot

    freq = rng.uniform(0.5, 2.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    # Drift is confined to a fixed corpus-level nuisance subspace so that a
    # representation can in principle learn to project it out.
    coeff = rng.normal(size=drift_basis.shape[0])
    direction = coeff @ drift_basis
    direction /= np.linalg.norm(direction)
    t_axis = np.arange(T) / max(T - 1, 1)
    drift = (cfg.drift_scale * cfg.class_scale *
             np.sin(2.0 * np.pi * freq * t_axis + phase)[:, None] * direction[None, :])

    appearance = base_app + drift + rng.normal(0.0, cfg.noise_scale, (T, cfg.Din))
    motion = base_mot + rng.normal(0.0, cfg.noise_scale, (T, cfg.Din))

    if cfg.boundary_amp > 0:
        # Fixed per-class pulse directions keep the boundary response of the
        # motion modality predictable across videos.
        for seg in segments:
            for frame in (seg.start, seg.end - 1):
                t = min(frame // cfg.stride, T - 1)
                motion[t] += cfg.boundary_amp * pulse_dirs[seg.k]

    return VideoSample(
        id=vid,
        features={"appearance": appearance, "motion": motion},
        labels=labels,
        segments=segments,
        stride=cfg.stride,
    )


def generate_synthetic_corpus(cfg):
    """Deterministic corpus of ``cfg.num_videos`` videos for the given seed."""
    emb_rng = np.random.default_rng([cfg.seed, 0])
    sigma = cfg.class_scale / np.sqrt(cfg.Din)
    emb_app = emb_rng.normal(0.0, sigma, (cfg.K, cfg.Din))
    emb_ind = emb_rng.normal(0.0, sigma, (cfg.K, cfg.Din))
    # Both modalities encode the same actions; motion embeddings share a
    # controllable component with the appearance ones.
    rho = cfg.modality_corr
    emb_mot = rho * emb_app + np.sqrt(1.0 - rho * rho) * emb_ind
    pulse_dirs = emb_rng.normal(size=(cfg.K, cfg.Din))
    pulse_dirs /= np.linalg.norm(pulse_dirs, axis=1, keepdims=True)
    drift_basis = emb_rng.normal(size=(max(cfg.Din // 10, 1), cfg.Din))
    return [_generate_video(cfg, vid, emb_app, emb_mot, pulse_dirs, drift_basis)
            for vid in range(cfg.num_videos)]


def save_features(path, sample):
    """Binary feature file; see README for the exact layout (magic DSF1)."""
    names = sorted(sample.features)
    T = sample.T
    din = sample.features[names[0]].shape[1]
    tgt, K = sample.labels.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<6I", len(names), T, din, tgt, K, sample.stride))
        for name in names:
            feat = sample.features[name]
            if feat.shape != (T, din):
                raise StructuralError(f"modality {name} has shape {feat.shape}, expected {(T, din)}")
            fh.write(np.ascontiguousarray(feat, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(sample.labels, dtype=np.uint8).tobytes())
        fh.write(struct.pack("<I", len(sample.segments)))
        for seg in sample.segments:
            fh.write(struct.pack("<3I", seg.k, seg.start, seg.end))


def load_features(path, video_id=None):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FEATURE_MAGIC:
        raise FormatError(
            f"bad feature-file magic {blob[:4]!r} at offset 0, expected {FEATURE_MAGIC!r}"
        )
    if len(blob) < 28:
        raise FormatError(f"truncated feature-file header at offset {len(blob)}")
    n_mod, T, din, tgt, K, stride = struct.unpack_from("<6I", blob, 4)
    if T < 2:
        raise FormatError(f"feature file declares T={T}, need T >= 2 (offset 8)")
    if n_mod < 1 or n_mod > len(MODALITY_NAMES):
        raise FormatError(f"unsupported modality count {n_mod} (offset 4)")
    if tgt != T * stride:
        raise FormatError(f"label length {tgt} != T*stride = {T * stride} (offset 16)")
    offset = 28
    features = {}
    for m in range(n_mod):
        count = T * din
        if offset + 8 * count > len(blob):
            raise FormatError(f"truncated modality payload at offset {offset}")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(T, din)
        features[MODALITY_NAMES[m]] = arr.copy()
        offset += 8 * count
    if offset + tgt * K > len(blob):
        raise FormatError(f"truncated label block at offset {offset}")
    labels = np.frombuffer(blob, dtype=np.uint8, count=tgt * K, offset=offset).reshape(tgt, K).copy()
    if not np.all((labels == 0) | (labels == 1)):
        raise FormatError(f"non-binary label byte in block at offset {offset}")
    offset += tgt * K
    if offset + 4 > len(blob):
        raise FormatError(f"truncated segment count at offset {offset}")
    (n_segs,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    segments = []
    for _ in range(n_segs):
        if offset + 12 > len(blob):
            raise FormatError(f"truncated segment record at offset {offset}")
        k, start, end = struct.unpack_from("<3I", blob, offset)
        segments.append(SegmentLabel(k=k, start=start, end=end))
        offset += 12
    if offset != len(blob):
        raise FormatError(f"trailing bytes in feature file at offset {offset}")
    vid = video_id if video_id is not None else _id_from_path(path)
    return VideoSample(id=vid, features=features, labels=labels, segments=segments, stride=stride)


def _id_from_path(path):
    import re
    m = re.search(r"(\d+)", str(path).rsplit("/", 1)[-1])
    return int(m.group(1)) if m else 0


def negative_candidates(corpus):
    """video id -> ids of videos whose present-class sets differ."""
    by_id = {v.id: v.class_set for v in corpus}
    out = {}
    for vid, cs in by_id.items():
        out[vid] = [o for o, ocs in by_id.items() if o != vid and ocs != cs]
    return out


def make_batches(corpus, B, N, seed):
    """One epoch of batch pairings: P = B/(N+1) positives, N negatives each.

    Negatives are drawn uniformly from corpus videos with a differing class
    set. The final partial batch is kept. Deterministic per seed.
    """
    if B % (N + 1) != 0:
        raise ConfigError(f"batch size {B} not divisible by N+1 = {N + 1}")
    candidates = negative_candidates(corpus)
    if N > 0:
        blocked = sorted(v for v, c in candidates.items() if not c)
        if blocked:
            raise PairingError(f"no valid negative exists for video ids {blocked}")
    rng = np.random.default_rng(seed)
    order = [corpus[i].id for i in rng.permutation(len(corpus))]
    P = B // (N + 1)
    batches = []
    for lo in range(0, len(order), P):
        chunk = order[lo:lo + P]
        negatives = []
        for vid in chunk:
            cands = candidates[vid]
            for _ in range(N):
                negatives.append((vid, cands[int(rng.integers(len(cands)))]))
        batches.append(BatchPairing(positives=chunk, negatives=negatives, n_per_positive=N))
    return batches


def total_snippets(corpus):
    return sum(v.T for v in corpus)


def default_phi(corpus, N):
    """Ratio of negatives per positive to the corpus snippet count."""
    return N / total_snippets(corpus) if N > 0 else 1.0
