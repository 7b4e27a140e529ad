"""Deterministic synthetic tracking scenarios.

A scenario is a set of objects moving along piecewise-linear waypoint paths on
a 960x540 canvas, a list of occlusion windows, a noisy detector model and an
appearance model. :func:`generate` turns that into exact ground truth, a
detection stream and an embedding sidecar.

Randomness comes from numpy's PCG64 bit generator seeded with ``spec.seed``.
Draws happen in a fixed order, which is part of the output contract:

1. identity mean directions, identity by identity;
2. for every frame, for every visible, non-occluded object: miss uniform,
   4 jitter normals (dx, dy, dw, dh), score uniform, angle normal, then a
   ``dim``-vector of normals for the noise direction;
3. then, per frame, the false-positive count (Poisson) and for each false
   positive: center (2 uniforms), width, aspect, score, and ``dim`` normals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import SpecError, UnknownPreset
from .mot_io import (DetectionRecord, EmbeddingSidecar, TrackRecord, records_to_detections, sequence_paths,
                     write_detections, write_records, write_sidecar)

CANVAS = (960, 540)


@dataclass(frozen=True)
class ObjectSpec:
    """``waypoints`` are ``(frame, cx, cy)``; the object exists from the first to the last waypoint frame."""
    waypoints: tuple[tuple[int, float, float], ...]
    size: tuple[float, float]

    @property
    def entry(self) -> int:
        return self.waypoints[0][0]

    @property
    def exit(self) -> int:
        return self.waypoints[-1][0]

    def center(self, frame: int) -> tuple[float, float]:
        fs = [w[0] for w in self.waypoints]
        return (float(np.interp(frame, fs, [w[1] for w in self.waypoints])),
                float(np.interp(frame, fs, [w[2] for w in self.waypoints])))


@dataclass(frozen=True)
class Occlusion:
    obj: int
    start: int
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration - 1


@dataclass(frozen=True)
class DetectorNoise:
    center_sigma: float = 0.0        # pixels
    size_sigma: float = 0.0          # relative to w/h
    score_low: float = 1.0
    score_high: float = 1.0
    fp_rate: float = 0.0             # mean false positives per frame
    fp_score_low: float = 0.05
    fp_score_high: float = 0.5
    miss_rate: float = 0.0


@dataclass(frozen=True)
class EmbeddingModel:
    dim: int = 2048
    angular_sigma_deg: float = 0.0
    min_angle_deg: float = 0.0
    # if set, identity directions sit this far from one shared axis
    cluster_angle_deg: Optional[float] = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    seed: int
    frames: int
    objects: tuple[ObjectSpec, ...]
    occlusions: tuple[Occlusion, ...] = ()
    noise: DetectorNoise = field(default_factory=DetectorNoise)
    embedding: EmbeddingModel = field(default_factory=EmbeddingModel)
    canvas: tuple[int, int] = CANVAS

    def validate(self) -> None:
        if self.frames < 1:
            raise SpecError("frames must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise SpecError("seed must fit in 64 bits")
        if self.embedding.dim < 1:
            raise SpecError("embedding dim must be >= 1")
        for k, o in enumerate(self.objects):
            fs = [w[0] for w in o.waypoints]
            if not fs or any(b <= a for a, b in zip(fs, fs[1:])):
                raise SpecError(f"object {k}: waypoint frames must be strictly increasing")
            if o.entry < 1 or o.exit > self.frames:
                raise SpecError(f"object {k}: lifespan {o.entry}..{o.exit} outside 1..{self.frames}")
            if o.size[0] <= 0 or o.size[1] <= 0:
                raise SpecError(f"object {k}: size must be positive")
        for occ in self.occlusions:
            if occ.duration < 1:
                raise SpecError("occlusion duration must be >= 1")
            if not 0 <= occ.obj < len(self.objects):
                raise SpecError(f"occlusion refers to unknown object {occ.obj}")
            o = self.objects[occ.obj]
            if occ.start < o.entry or occ.end > o.exit:
                raise SpecError(f"occlusion {occ.start}..{occ.end} outside object {occ.obj} lifespan")
        n = self.noise
        if not (0 <= n.miss_rate <= 1 and n.fp_rate >= 0 and n.center_sigma >= 0 and n.size_sigma >= 0):
            raise SpecError("invalid detector noise parameters")

    def zero_noise(self) -> "ScenarioSpec":
        """Same scenario with a perfect detector and noiseless appearance."""
        n = replace(self.noise, center_sigma=0.0, size_sigma=0.0, fp_rate=0.0, miss_rate=0.0)
        return replace(self, noise=n, embedding=replace(self.embedding, angular_sigma_deg=0.0))

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return replace(self, seed=seed)


@dataclass
class Scenario:
    spec: ScenarioSpec
    ground_truth: list[TrackRecord]
    detections: dict[int, list[DetectionRecord]]
    embeddings: np.ndarray          # (rows, dim) float32
    identities: np.ndarray          # per embedding row: object index, -1 for false positives
    directions: np.ndarray          # (objects, dim) identity mean directions

    @property
    def sidecar(self) -> EmbeddingSidecar:
        return EmbeddingSidecar(self.embeddings.shape[1], self.embeddings.shape[0], self.embeddings)

    def tracker_frames(self, with_embeddings: bool = True) -> dict:
        return records_to_detections(self.detections, self.sidecar if with_embeddings else None)

    def write(self, out_dir, seq: Optional[str] = None) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = sequence_paths(out, seq or self.spec.name)
        write_records(self.ground_truth, paths["gt"])
        write_detections(self.detections, paths["det"])
        write_sidecar(paths["emb"], self.embeddings)
        return {k: paths[k] for k in ("gt", "det", "emb")}


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _perpendicular(v: np.ndarray, axis: np.ndarray) -> np.ndarray:
    p = v - np.dot(v, axis) * axis
    return _unit(p)


def _rotate(axis: np.ndarray, noise: np.ndarray, angle: float) -> np.ndarray:
    return _unit(math.cos(angle) * axis + math.sin(angle) * _perpendicular(noise, axis))


def pairwise_angles_deg(directions: np.ndarray) -> np.ndarray:
    c = np.clip(directions @ directions.T, -1.0, 1.0)
    return np.degrees(np.arccos(c))


def _identity_directions(rng: np.random.Generator, n: int, model: EmbeddingModel) -> np.ndarray:
    if n == 0:
        return np.zeros((0, model.dim))
    for _ in range(100):
        if model.cluster_angle_deg is None:
            dirs = np.stack([_unit(rng.standard_normal(model.dim)) for _ in range(n)])
        else:
            axis = _unit(rng.standard_normal(model.dim))
            theta = math.radians(model.cluster_angle_deg)
            dirs = np.stack([_rotate(axis, rng.standard_normal(model.dim), theta) for _ in range(n)])
        ang = pairwise_angles_deg(dirs)
        off = ang[~np.eye(n, dtype=bool)]
        if off.size == 0 or off.min() >= model.min_angle_deg:
            return dirs
    raise SpecError(f"could not place {n} identities {model.min_angle_deg} degrees apart")


def generate(spec: ScenarioSpec) -> Scenario:
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    noise, model = spec.noise, spec.embedding
    dirs = _identity_directions(rng, len(spec.objects), model)
    sigma = math.radians(model.angular_sigma_deg)
    occluded = {(occ.obj, f) for occ in spec.occlusions for f in range(occ.start, occ.end + 1)}
    W, H = spec.canvas

    gt: list[TrackRecord] = []
    dets: dict[int, list[DetectionRecord]] = {}
    embs: list[np.ndarray] = []
    ids: list[int] = []

    def emit(frame, x, y, w, h, score, emb, identity):
        dets.setdefault(frame, []).append(
            DetectionRecord(frame, x, y, w, h, score, 0, len(embs)))
        embs.append(emb)
        ids.append(identity)

    for f in range(1, spec.frames + 1):
        for k, o in enumerate(spec.objects):
            if not o.entry <= f <= o.exit:
                continue
            cx, cy = o.center(f)
            w, h = o.size
            gt.append(TrackRecord(f, k + 1, cx - w / 2.0, cy - h / 2.0, w, h, 1.0))
            if (k, f) in occluded:
                continue
            miss = rng.random() < noise.miss_rate
            jx, jy, jw, jh = rng.standard_normal(4)
            score = float(np.clip(rng.uniform(noise.score_low, noise.score_high), 0.0, 1.0))
            angle = abs(rng.standard_normal()) * sigma
            direction = rng.standard_normal(model.dim)
            if miss:
                continue
            dw = max(w * (1.0 + noise.size_sigma * jw), 0.1 * w)
            dh = max(h * (1.0 + noise.size_sigma * jh), 0.1 * h)
            dcx = cx + noise.center_sigma * jx
            dcy = cy + noise.center_sigma * jy
            emb = dirs[k] if angle == 0.0 else _rotate(dirs[k], direction, angle)
            emit(f, dcx - dw / 2.0, dcy - dh / 2.0, dw, dh, score, emb, k)
        n_fp = int(rng.poisson(noise.fp_rate))
        for _ in range(n_fp):
            cx, cy = rng.uniform(0, W), rng.uniform(0, H)
            w = rng.uniform(30.0, 90.0)
            h = w * rng.uniform(0.6, 0.9)
            score = float(rng.uniform(noise.fp_score_low, noise.fp_score_high))
            emb = _unit(rng.standard_normal(model.dim))
            emit(f, cx - w / 2.0, cy - h / 2.0, w, h, score, emb, -1)

    emb_arr = np.array(embs, dtype=np.float32).reshape(len(embs), model.dim)
    return Scenario(spec, gt, dets, emb_arr, np.array(ids, dtype=np.int64), dirs)


# -- presets -------------------------------------------------------------

_DETECTOR = DetectorNoise(center_sigma=1.5, size_sigma=0.02, score_low=0.5, score_high=1.0,
                          fp_rate=0.05, fp_score_low=0.05, fp_score_high=0.5)
_APPEARANCE = EmbeddingModel(dim=2048, angular_sigma_deg=15.0, min_angle_deg=60.0)


def _linear(start_frame, end_frame, cx, cy, vx, vy):
    n = end_frame - start_frame
    return ((start_frame, cx, cy), (end_frame, cx + vx * n, cy + vy * n))


def _velocity_path(cx, cy, vxs, first_frame=1):
    pts = [(first_frame, cx, cy)]
    for k, vx in enumerate(vxs):
        cx += vx
        pts.append((first_frame + k + 1, cx, cy))
    return tuple(pts)


# per-frame horizontal displacement of the fast_motion object (box width 40)
FAST_MOTION_PROFILE = (8.0,) * 10 + (24.0, 40.0) + (48.0,) * 8 + (40.0, 24.0) + (8.0,) * 10


def preset(name: str, seed: int = 0) -> ScenarioSpec:
    """Frozen scenario definitions. Changing one is a breaking change.

    ``short_occlusion``
        one car (60x40) at 5 px/frame, hidden for 3 frames from frame 15; 40 frames.
    ``long_occlusion``
        one car (60x40) at (6, 0.5) px/frame, hidden for 8 frames from frame 25; 60 frames.
    ``crossing``
        two cars (50x40) on converging lines that cross near frame 34; the lower
        one is hidden for 10 frames from frame 29. Identities >= 60 degrees apart.
    ``fast_motion``
        one car (40x30) that speeds up from 8 to 48 px/frame (1.2x its width,
        so consecutive boxes do not overlap) for 8 frames, then slows down again.
    ``dense_parallel``
        ten cars (50x36) in adjacent lanes 45 px apart with identity directions
        clustered 5 degrees around one axis (pairwise <= 10 degrees); 80 frames.
    """
    if name == "short_occlusion":
        return ScenarioSpec(name, seed, 40, (ObjectSpec(_linear(1, 40, 100.0, 270.0, 5.0, 0.5), (60.0, 40.0)),),
                            (Occlusion(0, 15, 3),),
                            replace(_DETECTOR, center_sigma=1.0), _APPEARANCE)
    if name == "long_occlusion":
        return ScenarioSpec(name, seed, 60, (ObjectSpec(_linear(1, 60, 80.0, 270.0, 6.0, 0.5), (60.0, 40.0)),),
                            (Occlusion(0, 25, 8),), _DETECTOR, _APPEARANCE)
    if name == "crossing":
        objs = (ObjectSpec(_linear(1, 70, 100.0, 250.0, 5.0, 0.6), (50.0, 40.0)),
                ObjectSpec(_linear(1, 70, 100.0, 290.0, 5.0, -0.6), (50.0, 40.0)))
        return ScenarioSpec(name, seed, 70, objs, (Occlusion(1, 29, 10),), _DETECTOR, _APPEARANCE)
    if name == "fast_motion":
        obj = ObjectSpec(_velocity_path(60.0, 270.0, FAST_MOTION_PROFILE), (40.0, 30.0))
        noise = replace(_DETECTOR, center_sigma=1.0, fp_rate=0.0)
        return ScenarioSpec(name, seed, obj.exit, (obj,), (), noise, _APPEARANCE)
    if name == "dense_parallel":
        objs = tuple(ObjectSpec(_linear(1, 80, 80.0 + 20.0 * k, 60.0 + 45.0 * k, 4.0 + 0.2 * k, 0.0), (50.0, 36.0))
                     for k in range(10))
        noise = replace(_DETECTOR, center_sigma=1.0, fp_rate=0.1, miss_rate=0.05)
        appearance = replace(_APPEARANCE, min_angle_deg=3.0, cluster_angle_deg=5.0)
        return ScenarioSpec(name, seed, 80, objs, (), noise, appearance)
    raise UnknownPreset(name)


PRESETS = ("short_occlusion", "long_occlusion", "crossing", "fast_motion", "dense_parallel")
