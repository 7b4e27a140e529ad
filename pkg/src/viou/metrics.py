"""CLEAR-MOT scoring and the UA-DETRAC style confidence-threshold sweep.

MOTP is reported as the mean IOU of matched pairs (higher is better), the
overlap convention of UA-DETRAC; some toolkits report ``1 - IOU`` instead.
PR-* aggregates are the arithmetic mean over the sweep points, an
approximation of the benchmark's curve integration that needs no fitting.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .affinity import CostMatrix
from .assignment import solve
from .geom import boxes_to_array, iou_matrix
from .mot_io import TrackRecord, filter_confidence, records_to_detections, tracks_to_records

SWEEP_THRESHOLDS = tuple(i / 10 for i in range(11))
MT_RATIO = 0.8
ML_RATIO = 0.2


@dataclass
class MetricsBundle:
    mota: Optional[float]
    motp: Optional[float]
    mt: int
    ml: int
    mt_frac: Optional[float]
    ml_frac: Optional[float]
    ids: int
    fm: int
    fp: int
    fn: int
    gt_count: int
    hyp_count: int
    matches: int
    gt_tracks: int
    match_log: list[tuple[int, int, int, float]] = field(default_factory=list, repr=False)

    # column order of every CSV row produced from a bundle
    COLUMNS = ("mota", "motp", "mt", "ml", "mt_frac", "ml_frac", "ids", "fm", "fp", "fn",
               "gt_count", "hyp_count", "matches", "gt_tracks")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.COLUMNS}


def _by_frame(records: Sequence[TrackRecord]) -> dict[int, list[TrackRecord]]:
    out: dict[int, list[TrackRecord]] = {}
    for r in records:
        out.setdefault(r.frame, []).append(r)
    return out


def clear_mot(gt: Sequence[TrackRecord], hyp: Sequence[TrackRecord], match_iou: float = 0.5) -> MetricsBundle:
    """Score hypothesis tracks against ground truth with the CLEAR-MOT rules.

    A ground-truth object keeps its previous hypothesis while their IOU stays
    at or above ``match_iou``; everything else is matched by minimum-cost
    assignment on ``1 - IOU`` under the same gate.
    """
    gt_frames = _by_frame(gt)
    hyp_frames = _by_frame(hyp)
    last_hyp: dict[int, int] = {}
    # per gt id: list of matched flags over the frames it is present
    status: dict[int, list[bool]] = {}
    fp = fn = ids = 0
    iou_sum = 0.0
    log = []

    for f in sorted(set(gt_frames) | set(hyp_frames)):
        g = sorted(gt_frames.get(f, []), key=lambda r: r.track_id)
        h = sorted(hyp_frames.get(f, []), key=lambda r: r.track_id)
        h_index = {r.track_id: k for k, r in enumerate(h)}
        ious = iou_matrix(boxes_to_array([r.bbox for r in g]), boxes_to_array([r.bbox for r in h]))
        pairs: list[tuple[int, int]] = []
        used_g, used_h = set(), set()
        for a, r in enumerate(g):
            prev = last_hyp.get(r.track_id)
            if prev is None or prev not in h_index:
                continue
            b = h_index[prev]
            if b in used_h or ious[a, b] < match_iou:
                continue
            pairs.append((a, b))
            used_g.add(a)
            used_h.add(b)
        free_g = [a for a in range(len(g)) if a not in used_g]
        free_h = [b for b in range(len(h)) if b not in used_h]
        if free_g and free_h:
            sub = ious[np.ix_(free_g, free_h)]
            asg = solve(CostMatrix(1.0 - sub, sub >= match_iou))
            for i, j, _ in asg.matches:
                a, b = free_g[i], free_h[j]
                prev = last_hyp.get(g[a].track_id)
                if prev is not None and prev != h[b].track_id:
                    ids += 1
                pairs.append((a, b))
                used_g.add(a)
                used_h.add(b)
        for a, b in sorted(pairs):
            gid, hid = g[a].track_id, h[b].track_id
            last_hyp[gid] = hid
            iou_sum += float(ious[a, b])
            log.append((f, gid, hid, float(ious[a, b])))
        for a, r in enumerate(g):
            status.setdefault(r.track_id, []).append(a in used_g)
        fn += len(g) - len(used_g)
        fp += len(h) - len(used_h)

    matches = len(log)
    fm = 0
    mt = ml = 0
    for flags in status.values():
        hit = [k for k, v in enumerate(flags) if v]
        if hit:
            window = flags[hit[0]:hit[-1] + 1]
            fm += sum(1 for k in range(1, len(window)) if window[k - 1] and not window[k])
        ratio = len(hit) / len(flags)
        if ratio >= MT_RATIO:
            mt += 1
        if ratio <= ML_RATIO:
            ml += 1
    gt_count = len(gt)
    n_tracks = len(status)
    return MetricsBundle(
        mota=None if gt_count == 0 else 1.0 - (fn + fp + ids) / gt_count,
        motp=None if matches == 0 else iou_sum / matches,
        mt=mt, ml=ml,
        mt_frac=None if n_tracks == 0 else mt / n_tracks,
        ml_frac=None if n_tracks == 0 else ml / n_tracks,
        ids=ids, fm=fm, fp=fp, fn=fn,
        gt_count=gt_count, hyp_count=len(hyp), matches=matches, gt_tracks=n_tracks,
        match_log=log,
    )


def detector_pr(gt: Sequence[TrackRecord], frames: Mapping[int, Sequence], match_iou: float = 0.5):
    """Frame-wise detector precision and recall; precision is None with no detections."""
    gt_frames = _by_frame(gt)
    tp = n_det = 0
    for f, dets in frames.items():
        n_det += len(dets)
        g = gt_frames.get(f, [])
        if not dets or not g:
            continue
        ious = iou_matrix(boxes_to_array([d.bbox for d in dets]), boxes_to_array([r.bbox for r in g]))
        tp += len(solve(CostMatrix(1.0 - ious, ious >= match_iou)).matches)
    precision = tp / n_det if n_det else None
    recall = tp / len(gt) if gt else None
    return precision, recall


@dataclass
class SweepPoint:
    threshold: float
    precision: Optional[float]
    recall: Optional[float]
    detections: int
    metrics: MetricsBundle


PR_KEYS = ("mota", "motp", "mt_frac", "ml_frac", "ids", "fm", "fp", "fn")


@dataclass
class PrSweepResult:
    points: list[SweepPoint]
    aggregate: dict[str, Optional[float]]

    @property
    def pr_mota(self) -> Optional[float]:
        return self.aggregate["pr_mota"]


def aggregate_points(points: Sequence[SweepPoint]) -> dict[str, Optional[float]]:
    """Mean of every metric over the sweep; undefined values are left out of their mean."""
    out = {}
    for k in PR_KEYS:
        vals = [getattr(p.metrics, k) for p in points]
        vals = [v for v in vals if v is not None]
        out[f"pr_{k}"] = math.fsum(vals) / len(vals) if vals else None
    return out


def _sweep_point(args) -> SweepPoint:
    from .tracker import run_tracker
    gt, records, sidecar, config, threshold, match_iou, span = args
    kept = filter_confidence(records, threshold)
    result = run_tracker(records_to_detections(kept, sidecar), config, span)
    bundle = clear_mot(gt, tracks_to_records(result.tracks), match_iou)
    precision, recall = detector_pr(gt, kept, match_iou)
    return SweepPoint(threshold, precision, recall, sum(len(v) for v in kept.values()), bundle)


def worker_count(requested: Optional[int] = None) -> int:
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("VIOU_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def pr_sweep(gt: Sequence[TrackRecord], records: Mapping[int, Sequence], sidecar=None, config=None,
             match_iou: float = 0.5, thresholds: Sequence[float] = SWEEP_THRESHOLDS,
             workers: Optional[int] = None) -> PrSweepResult:
    """Run tracker + CLEAR-MOT at every confidence threshold.

    ``records`` are parsed :class:`~viou.mot_io.DetectionRecord` lists by
    frame; at threshold ``t`` only detections with confidence ``> t`` are
    tracked. The frame range is fixed from the unfiltered detections so every
    point tracks the same span.
    """
    from .tracker import TrackerConfig, frame_span
    config = config or TrackerConfig()
    span = frame_span(records)
    jobs = [(gt, records, sidecar, config, float(t), match_iou, span) for t in thresholds]
    n = min(worker_count(workers), len(jobs))
    if n <= 1:
        points = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            points = list(pool.map(_sweep_point, jobs))
    return PrSweepResult(points, aggregate_points(points))


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)
