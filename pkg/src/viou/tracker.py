"""Online V-IOU tracker extended with ReID appearance association.

Per frame, every live track (active or coasting) offers a predicted box and its
appearance summary; detections are matched to them by gated min-cost
assignment on the fused cost. Unmatched tracks coast on predictions for up to
``ttl`` frames, after which they terminate and their trailing predictions are
rolled back. Unmatched detections start new tracks, and each birth may be
spliced onto a recently terminated track by backward extrapolation. Tracks with
fewer than ``t_min`` detected boxes are dropped from the output.
"""
from __future__ import annotations

import enum
import time
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .affinity import AssocParams, cost_matrix_arrays, gate, normalize_rows, pair_cost
from .assignment import solve
from .errors import ConfigError, DimensionMismatch, OutOfOrderFrame
from .geom import BBox, boxes_to_array, iou
from .predictor import PREDICTOR_KINDS, Predictor, make_predictor


class TrackState(enum.Enum):
    ACTIVE = "active"
    COASTING = "coasting"
    FINISHED = "finished"


class BoxSource(enum.Enum):
    DETECTED = "detected"
    PREDICTED = "predicted"
    # gap filled when a backward merge splices two tracks together
    INTERPOLATED = "interpolated"


@dataclass
class Detection:
    bbox: BBox
    confidence: float = 1.0
    embedding: Optional[np.ndarray] = None
    class_id: int = -1


@dataclass
class TrackBox:
    frame: int
    bbox: BBox
    source: BoxSource
    confidence: float


@dataclass
class Track:
    id: int
    created_at: int
    state: TrackState = TrackState.ACTIVE
    boxes: list[TrackBox] = field(default_factory=list)
    embedding_ema: Optional[np.ndarray] = None
    last_embedding: Optional[np.ndarray] = None
    coast_count: int = 0
    # last detected frame, set once the track is finished
    finished_at: Optional[int] = None
    # frame at which the track was terminated (TTL expiry); merge window anchor
    expired_at: Optional[int] = None
    class_id: int = -1
    detected: list[tuple[int, BBox]] = field(default_factory=list, repr=False)

    @property
    def detected_count(self) -> int:
        return len(self.detected)

    @property
    def last_detected_frame(self) -> int:
        return self.detected[-1][0]

    @property
    def frames(self) -> list[int]:
        return [b.frame for b in self.boxes]

    def _rollback(self) -> None:
        while self.boxes and self.boxes[-1].source is not BoxSource.DETECTED:
            self.boxes.pop()


@dataclass(frozen=True)
class TrackerConfig:
    assoc: AssocParams = field(default_factory=AssocParams)
    ttl: int = 15
    t_min: int = 3
    ema_momentum: float = 0.9
    backward_enabled: bool = True
    backward_appearance_only: bool = False
    predictor: str = "constant_velocity"
    velocity_window: int = 3

    def __post_init__(self):
        if self.ttl < 0:
            raise ConfigError(f"ttl must be >= 0, got {self.ttl}")
        if self.t_min < 1:
            raise ConfigError(f"t_min must be >= 1, got {self.t_min}")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ConfigError(f"ema_momentum must lie in [0, 1], got {self.ema_momentum}")
        if self.predictor not in PREDICTOR_KINDS:
            raise ConfigError(f"unknown predictor {self.predictor!r}")
        if self.velocity_window < 2:
            raise ConfigError("velocity_window must be >= 2")

    def flat(self) -> dict:
        out = {f.name: getattr(self.assoc, f.name) for f in fields(AssocParams)}
        for f in fields(self):
            if f.name != "assoc":
                out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_flat(cls, values: Mapping, base: Optional["TrackerConfig"] = None) -> "TrackerConfig":
        """Build a config from flat ``key -> value`` pairs layered over ``base``.

        Giving only one of ``alpha``/``beta`` sets the other to its complement.
        """
        base = base or cls()
        assoc_keys = {f.name for f in fields(AssocParams)}
        own_keys = {f.name for f in fields(cls)} - {"assoc"}
        unknown = set(values) - assoc_keys - own_keys
        if unknown:
            raise ConfigError(f"unknown tracker config keys: {', '.join(sorted(unknown))}")
        a = {k: float(values[k]) for k in assoc_keys if k in values}
        if "beta" in a and "alpha" not in a:
            a["alpha"] = 1.0 - a["beta"]
        elif "alpha" in a and "beta" not in a:
            a["beta"] = 1.0 - a["alpha"]
        try:
            assoc = replace(base.assoc, **a)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        own = {}
        for f in fields(cls):
            if f.name == "assoc" or f.name not in values:
                continue
            v = values[f.name]
            if f.name in ("ttl", "t_min", "velocity_window"):
                v = int(v)
            elif f.name == "ema_momentum":
                v = float(v)
            elif f.name in ("backward_enabled", "backward_appearance_only"):
                v = _as_bool(v)
            own[f.name] = v
        return replace(base, assoc=assoc, **own)


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


@dataclass
class FrameEvents:
    frame: int
    matches: list[tuple[int, int]] = field(default_factory=list)  # (detection index, track id)
    births: list[int] = field(default_factory=list)
    coasts: list[int] = field(default_factory=list)
    deaths: list[int] = field(default_factory=list)
    merges: list[tuple[int, int]] = field(default_factory=list)  # (retired id, surviving id)


@dataclass
class MergeDecision:
    candidate: Track
    cost: float
    iou: float
    cosine: Optional[float]


def _ema(prev: Optional[np.ndarray], e: np.ndarray, momentum: float) -> np.ndarray:
    if prev is None:
        return e
    v = momentum * prev + (1.0 - momentum) * e
    n = float(np.linalg.norm(v))
    if n == 0.0:
        return e
    return v / n


def _interpolate(a: BBox, b: BBox, t: float) -> BBox:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    x1 = ax1 + t * (bx1 - ax1)
    y1 = ay1 + t * (by1 - ay1)
    x2 = ax2 + t * (bx2 - ax2)
    y2 = ay2 + t * (by2 - ay2)
    return BBox(x1, y1, x2 - x1, y2 - y1)


def merge_backward(new_track: Track, finished: Iterable[Track], config: TrackerConfig,
                   predictor: Optional[Predictor] = None) -> Optional[MergeDecision]:
    """Pick the finished track (if any) that ``new_track`` continues.

    ``new_track`` is extrapolated backward to each candidate's last detected
    frame and compared with the candidate's final box and appearance summary.
    """
    predictor = predictor or make_predictor(config.predictor, config.velocity_window)
    p = config.assoc
    start = new_track.created_at
    best: Optional[MergeDecision] = None
    for cand in sorted(finished, key=lambda t: t.id):
        if not cand.detected or cand.last_detected_frame >= start:
            continue
        steps = start - cand.last_detected_frame
        back = predictor.backward(new_track.detected, steps)
        s_iou = iou(back, cand.detected[-1][1])
        has_app = new_track.embedding_ema is not None and cand.embedding_ema is not None
        cos = float(np.clip(np.dot(new_track.embedding_ema, cand.embedding_ema), -1.0, 1.0)) if has_app else None
        if config.backward_appearance_only:
            if not has_app or cos < p.sigma_reid:
                continue
            cost = 1.0 - max(cos, 0.0)
        else:
            c = cos if has_app else 0.0
            ok = gate(np.array(s_iou), np.array(c), np.array(has_app), p)
            if not bool(ok):
                continue
            cost = pair_cost(s_iou, c, p)
        if best is None or cost < best.cost:
            best = MergeDecision(cand, cost, s_iou, cos)
    return best


def splice(into: Track, new_track: Track, momentum: float) -> None:
    """Append ``new_track`` to ``into``, filling the gap by linear interpolation."""
    f0, a = into.detected[-1]
    f1, b = new_track.detected[0]
    conf = min(into.boxes[-1].confidence, new_track.boxes[0].confidence)
    span = f1 - f0
    for g in range(f0 + 1, f1):
        into.boxes.append(TrackBox(g, _interpolate(a, b, (g - f0) / span), BoxSource.INTERPOLATED, conf))
    into.boxes.extend(new_track.boxes)
    into.detected.extend(new_track.detected)
    if new_track.embedding_ema is not None:
        into.embedding_ema = _ema(into.embedding_ema, new_track.embedding_ema, momentum)
        into.last_embedding = new_track.last_embedding
    into.state = TrackState.ACTIVE
    into.coast_count = 0
    into.finished_at = None
    into.expired_at = None


class Tracker:
    """Single-sequence online tracker. Feed frames in increasing order, then :meth:`finalize`."""

    def __init__(self, config: Optional[TrackerConfig] = None):
        self.config = config or TrackerConfig()
        self.predictor = make_predictor(self.config.predictor, self.config.velocity_window)
        self.live: list[Track] = []
        self._recent: deque[Track] = deque()
        self._done: list[Track] = []
        self._next_id = 1
        self.frame: Optional[int] = None
        self.dim: Optional[int] = None
        self.n_births = 0
        self.n_merges = 0
        self._finalized = False
        # seconds spent building the cost matrix and solving it
        self.assoc_seconds = 0.0

    # -- frame loop -------------------------------------------------------
    def step(self, frame: int, detections: Sequence[Detection]) -> FrameEvents:
        if self._finalized:
            raise RuntimeError("tracker already finalized")
        if self.frame is not None and frame <= self.frame:
            raise OutOfOrderFrame(f"frame {frame} does not advance past {self.frame}")
        events = FrameEvents(frame)
        if self.frame is not None:
            for g in range(self.frame + 1, frame):
                self._advance(g, (), events)
        self._advance(frame, detections, events)
        return events

    def _advance(self, f: int, detections: Sequence[Detection], ev: FrameEvents) -> None:
        self.frame = f
        cfg = self.config
        live = self.live
        preds = [self.predictor.forward(t.detected, f - t.last_detected_frame) for t in live]

        det_emb, det_has = self._embed(detections)
        trk_emb, trk_has = self._track_embeddings()
        t0 = time.perf_counter()
        cm = cost_matrix_arrays(
            boxes_to_array([d.bbox for d in detections]), det_emb, det_has,
            boxes_to_array(preds), trk_emb, trk_has, cfg.assoc)
        asg = solve(cm)
        self.assoc_seconds += time.perf_counter() - t0

        for i, j, _ in asg.matches:
            t = live[j]
            d = detections[i]
            t.boxes.append(TrackBox(f, d.bbox, BoxSource.DETECTED, float(d.confidence)))
            t.detected.append((f, d.bbox))
            t.coast_count = 0
            t.state = TrackState.ACTIVE
            if det_has is not None and det_has[i]:
                t.embedding_ema = _ema(t.embedding_ema, det_emb[i], cfg.ema_momentum)
                t.last_embedding = det_emb[i]
            ev.matches.append((i, t.id))

        survivors = [live[j] for _, j, _ in asg.matches]
        for j in asg.unmatched_tracks:
            t = live[j]
            t.coast_count += 1
            if t.coast_count > cfg.ttl:
                self._expire(t, f)
                ev.deaths.append(t.id)
                continue
            t.boxes.append(TrackBox(f, preds[j], BoxSource.PREDICTED, t.boxes[-1].confidence))
            t.state = TrackState.COASTING
            survivors.append(t)
            ev.coasts.append(t.id)

        while self._recent and f - self._recent[0].expired_at > cfg.ttl:
            self._recent.popleft()

        for i in asg.unmatched_detections:
            d = detections[i]
            t = Track(id=self._next_id, created_at=f, class_id=d.class_id)
            self._next_id += 1
            t.boxes.append(TrackBox(f, d.bbox, BoxSource.DETECTED, float(d.confidence)))
            t.detected.append((f, d.bbox))
            if det_has is not None and det_has[i]:
                t.embedding_ema = det_emb[i]
                t.last_embedding = det_emb[i]
            self.n_births += 1
            ev.births.append(t.id)
            if cfg.backward_enabled and self._recent:
                decision = merge_backward(t, self._recent, cfg, self.predictor)
                if decision is not None:
                    cand = decision.candidate
                    splice(cand, t, cfg.ema_momentum)
                    self._recent.remove(cand)
                    self._done.remove(cand)
                    survivors.append(cand)
                    self.n_merges += 1
                    ev.merges.append((t.id, cand.id))
                    continue
            survivors.append(t)
        survivors.sort(key=lambda t: t.id)
        self.live = survivors

    def _expire(self, t: Track, f: int) -> None:
        t._rollback()
        t.state = TrackState.FINISHED
        t.coast_count = 0
        t.finished_at = t.last_detected_frame
        t.expired_at = f
        self._done.append(t)
        self._recent.append(t)

    def _embed(self, detections: Sequence[Detection]):
        idx = [k for k, d in enumerate(detections) if d.embedding is not None]
        if not idx:
            return None, None
        rows = [np.asarray(detections[k].embedding, dtype=np.float64).ravel() for k in idx]
        dim = self.dim if self.dim is not None else rows[0].size
        for r in rows:
            if r.size != dim:
                raise DimensionMismatch(f"embedding dim {r.size} differs from run dim {dim}")
        self.dim = dim
        emb = np.zeros((len(detections), dim))
        emb[idx] = normalize_rows(np.stack(rows))
        has = np.zeros(len(detections), dtype=bool)
        has[idx] = True
        return emb, has

    def _track_embeddings(self):
        if self.dim is None or not any(t.embedding_ema is not None for t in self.live):
            return None, None
        emb = np.zeros((len(self.live), self.dim))
        has = np.zeros(len(self.live), dtype=bool)
        for j, t in enumerate(self.live):
            if t.embedding_ema is not None:
                emb[j] = t.embedding_ema
                has[j] = True
        return emb, has

    def finalize(self) -> list[Track]:
        """Terminate everything and return the retained tracks sorted by id."""
        if not self._finalized:
            for t in self.live:
                t._rollback()
                t.state = TrackState.FINISHED
                t.coast_count = 0
                t.finished_at = t.last_detected_frame
                self._done.append(t)
            self.live = []
            self._recent.clear()
            self._finalized = True
        keep = [t for t in self._done if t.detected_count >= self.config.t_min]
        return sorted(keep, key=lambda t: t.id)


@dataclass
class TrackingResult:
    tracks: list[Track]
    frames: int
    births: int
    merges: int


def frame_span(frames: Mapping[int, Sequence]) -> Optional[tuple[int, int]]:
    if not frames:
        return None
    return min(frames), max(frames)


def run_tracker(frames: Mapping[int, Sequence[Detection]], config: Optional[TrackerConfig] = None,
                span: Optional[tuple[int, int]] = None) -> TrackingResult:
    """Track a whole sequence. ``span`` fixes the frame range (inclusive); by
    default it is taken from the frames that carry detections."""
    tracker = Tracker(config)
    span = span or frame_span(frames)
    n = 0
    if span is not None:
        for f in range(span[0], span[1] + 1):
            tracker.step(f, frames.get(f, ()))
            n += 1
    return TrackingResult(tracker.finalize(), n, tracker.n_births, tracker.n_merges)

