"""Per-frame mAP, score-to-segment post-processing and event-based mAP@IoU."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateInputError, StructuralError


@dataclass
class DetectionSegment:
    """Predicted action instance over half-open frames [start, end)."""
    k: int
    start: int
    end: int
    confidence: float

    def __post_init__(self):
        if self.start >= self.end:
            raise StructuralError(f"segment [{self.start}, {self.end}) is empty")
        if not np.isfinite(self.confidence):
            raise StructuralError("segment confidence must be finite")


@dataclass
class EvalConfig:
    iou_thresholds: tuple = (0.1, 0.3, 0.5)
    bin_threshold: float = 0.5
    merge_gap: int = 2
    min_duration: int = 2

    def __post_init__(self):
        for th in self.iou_thresholds:
            if not (0.0 < th <= 1.0):
                raise ConfigError(f"IoU threshold {th} outside (0, 1]")
        if self.merge_gap < 0 or self.min_duration < 0:
            raise ConfigError("merge_gap and min_duration must be >= 0")


@dataclass
class EvalReport:
    frame_ap: dict                 # class id -> AP
    frame_map: float
    event_ap: dict                 # theta -> {class id -> AP}
    event_map: dict                # theta -> mAP
    n_predictions: int = 0
    n_ground_truth: int = 0

    def to_json(self, path):
        payload = {
            "frame_ap": {str(k): v for k, v in self.frame_ap.items()},
            "frame_map": self.frame_map,
            "event_ap": {str(t): {str(k): v for k, v in aps.items()}
                         for t, aps in self.event_ap.items()},
            "event_map": {str(t): v for t, v in self.event_map.items()},
            "n_predictions": self.n_predictions,
            "n_ground_truth": self.n_ground_truth,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            w.writerow(["frame_map", repr(self.frame_map)])
            for t in sorted(self.event_map):
                w.writerow([f"event_map@{t}", repr(self.event_map[t])])
            for k in sorted(self.frame_ap):
                w.writerow([f"frame_ap_class_{k}", repr(self.frame_ap[k])])


def _ranked_ap(is_positive_in_rank_order, n_positives):
    """AP = sum over true positives of precision at their rank / n_positives."""
    tp = 0
    ap = 0.0
    for rank, hit in enumerate(is_positive_in_rank_order, start=1):
        if hit:
            tp += 1
            ap += tp / rank
    return ap / n_positives


def frame_map(prob, labels):
    """Per-class frame-ranking AP and its unweighted mean over labelled classes.

    Ties in score are broken by frame index (lower first). Classes without a
    single positive frame are excluded from the mean.
    """
    prob = np.asarray(prob, dtype=np.float64)
    labels = np.asarray(labels)
    if prob.shape != labels.shape:
        raise StructuralError(f"scores {prob.shape} and labels {labels.shape} differ")
    per_class = {}
    for k in range(prob.shape[1]):
        pos = labels[:, k] > 0
        n_pos = int(pos.sum())
        if n_pos == 0:
            continue
        order = np.lexsort((np.arange(prob.shape[0]), -prob[:, k]))
        per_class[k] = _ranked_ap(pos[order], n_pos)
    if not per_class:
        raise DegenerateInputError("no class has a positive frame")
    return per_class, float(np.mean(list(per_class.values())))


def segments_from_scores(prob, cfg):
    """Threshold, gap-merge and length-filter per-class score tracks.

    Frames with prob >= bin_threshold form runs; runs separated by at most
    ``merge_gap`` sub-threshold frames are merged; merged runs shorter than
    ``min_duration`` are dropped. Confidence is the mean prob over the segment.
    """
    prob = np.asarray(prob, dtype=np.float64)
    out = []
    for k in range(prob.shape[1]):
        above = prob[:, k] >= cfg.bin_threshold
        runs = _runs(above)
        merged = []
        for start, end in runs:
            if merged and start - merged[-1][1] <= cfg.merge_gap:
                merged[-1] = (merged[-1][0], end)
            else:
                merged.append((start, end))
        for start, end in merged:
            if end - start < cfg.min_duration:
                continue
            conf = float(prob[start:end, k].mean())
            out.append(DetectionSegment(k=k, start=start, end=end, confidence=conf))
    return out


def _runs(mask):
    runs = []
    start = None
    for t, on in enumerate(mask):
        if on and start is None:
            start = t
        elif not on and start is not None:
            runs.append((start, t))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def temporal_iou(a, b):
    """Intersection over union of two half-open frame intervals."""
    inter = max(0, min(a.end, b.end) - max(a.start, b.start))
    union = (a.end - a.start) + (b.end - b.start) - inter
    return inter / union


def event_map(predictions, ground_truth, theta):
    """Event-based AP at IoU threshold theta via greedy confidence-order matching.

    Per class, predictions are visited in confidence-descending order (ties:
    lower index first); each is matched to the unmatched ground-truth segment
    of highest IoU and counts as a true positive when that IoU >= theta.
    """
    if not (0.0 < theta <= 1.0):
        raise ConfigError(f"IoU threshold {theta} outside (0, 1]")
    classes = sorted({g.k for g in ground_truth})
    per_class = {}
    for k in classes:
        gts = [g for g in ground_truth if g.k == k]
        preds = [p for p in predictions if p.k == k]
        order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
        matched = [False] * len(gts)
        hits = []
        for i in order:
            best_iou, best_j = 0.0, -1
            for j, g in enumerate(gts):
                if matched[j]:
                    continue
                iou = temporal_iou(preds[i], g)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou >= theta:
                matched[best_j] = True
                hits.append(True)
            else:
                hits.append(False)
        per_class[k] = _ranked_ap(hits, len(gts))
    if not per_class:
        raise DegenerateInputError("no ground-truth segments")
    return per_class, float(np.mean(list(per_class.values())))


def evaluate_model(params, videos, modality, cfg):
    """Corpus-level report for a trained model on one modality.

    Frames are pooled across videos for the frame metric; segments are
    extracted per video and shifted by a running frame offset so gap-merging
    and IoU matching never cross video boundaries.
    """
    from . import model as md

    probs, labels, gts, preds = [], [], [], []
    offset = 0
    for v in videos:
        feats = md.forward_features_np(params, v.features[modality])
        logits = md.upsample_logits(md.classify_np(params, feats), v.labels.shape[0])
        p = 1.0 / (1.0 + np.exp(-logits))
        probs.append(p)
        labels.append(v.labels)
        for seg in v.segments:
            gts.append(DetectionSegment(k=seg.k, start=seg.start + offset,
                                        end=seg.end + offset, confidence=1.0))
        for seg in segments_from_scores(p, cfg):
            preds.append(DetectionSegment(k=seg.k, start=seg.start + offset,
                                          end=seg.end + offset, confidence=seg.confidence))
        offset += v.labels.shape[0]
    f_ap, f_map = frame_map(np.concatenate(probs), np.concatenate(labels))
    e_ap, e_map = {}, {}
    for th in cfg.iou_thresholds:
        aps, m = event_map(preds, gts, th)
        e_ap[th] = aps
        e_map[th] = m
    return EvalReport(frame_ap=f_ap, frame_map=f_map, event_ap=e_ap, event_map=e_map,
                      n_predictions=len(preds), n_ground_truth=len(gts))


def evaluate_scores(prob, labels, gt_segments, cfg):
    """Full report: frame mAP plus event mAP at every configured threshold."""
    f_ap, f_map = frame_map(prob, labels)
    preds = segments_from_scores(prob, cfg)
    e_ap, e_map = {}, {}
    for th in cfg.iou_thresholds:
        aps, m = event_map(preds, gt_segments, th)
        e_ap[th] = aps
        e_map[th] = m
    return EvalReport(frame_ap=f_ap, frame_map=f_map, event_ap=e_ap, event_map=e_map,
                      n_predictions=len(preds), n_ground_truth=len(gt_segments))
