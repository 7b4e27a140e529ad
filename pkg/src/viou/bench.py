"""In-memory throughput benchmark for the association step and the full tracker."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .affinity import batched_cosine, scalar_cosine_loop
from .geom import BBox
from .synth import CANVAS
from .tracker import Detection, Tracker, TrackerConfig

# distinct noisy embeddings per identity; frames cycle through them
_BANK = 16


@dataclass
class BenchReport:
    detections: int
    dim: int
    frames: int
    assoc_fps: float
    end_to_end_fps: float
    cosine_speedup: float
    batched_seconds: float
    scalar_seconds: float

    def lines(self) -> list[str]:
        return [
            f"workload: {self.detections} detections/frame, dim {self.dim}, {self.frames} frames",
            f"association fps: {self.assoc_fps:.1f}",
            f"end-to-end fps: {self.end_to_end_fps:.1f}",
            f"cosine batched vs scalar loop: {self.cosine_speedup:.1f}x "
            f"({self.batched_seconds * 1e6:.1f} us vs {self.scalar_seconds * 1e3:.1f} ms)",
        ]


class Workload:
    """``n`` objects bouncing inside the canvas, one jittered detection each per frame."""

    def __init__(self, n: int, dim: int, seed: int = 0):
        rng = np.random.Generator(np.random.PCG64(seed))
        W, H = CANVAS
        self.n = n
        self.size = np.column_stack([rng.uniform(30, 60, n), rng.uniform(24, 40, n)])
        self.pos = np.column_stack([rng.uniform(60, W - 60, n), rng.uniform(40, H - 40, n)])
        self.vel = rng.uniform(-4, 4, (n, 2))
        dirs = rng.standard_normal((n, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        noise = rng.standard_normal((_BANK, n, dim)) * (0.25 / math.sqrt(dim))
        bank = dirs[None] + noise
        self.bank = bank / np.linalg.norm(bank, axis=2, keepdims=True)
        self.rng = rng

    def frame(self, f: int) -> list[Detection]:
        W, H = CANVAS
        self.pos += self.vel
        for axis, limit in ((0, W), (1, H)):
            out = (self.pos[:, axis] < 0) | (self.pos[:, axis] > limit)
            self.vel[out, axis] *= -1
        jitter = self.rng.standard_normal((self.n, 2))
        embs = self.bank[f % _BANK]
        dets = []
        for k in range(self.n):
            w, h = self.size[k]
            cx, cy = self.pos[k] + jitter[k]
            dets.append(Detection(BBox.from_center(float(cx), float(cy), float(w), float(h)), 0.9, embs[k]))
        return dets


def run_once(n: int, dim: int, frames: int, seed: int = 0, config: TrackerConfig | None = None):
    wl = Workload(n, dim, seed)
    tracker = Tracker(config)
    stepping = 0.0
    for f in range(1, frames + 1):
        dets = wl.frame(f)
        t0 = time.perf_counter()
        tracker.step(f, dets)
        stepping += time.perf_counter() - t0
    return frames / tracker.assoc_seconds, frames / stepping


def cosine_ratio(n: int, dim: int, seed: int = 0, repeats: int = 50):
    rng = np.random.Generator(np.random.PCG64(seed))
    q = rng.standard_normal((n, dim))
    g = rng.standard_normal((n, dim))
    t0 = time.perf_counter()
    for _ in range(repeats):
        batched_cosine(q, g)
    batched = (time.perf_counter() - t0) / repeats
    ql, gl = q.tolist(), g.tolist()
    t0 = time.perf_counter()
    scalar_cosine_loop(ql, gl)
    scalar = time.perf_counter() - t0
    return scalar / batched, batched, scalar


def run_bench(detections: int = 25, dim: int = 2048, frames: int = 5000, repeats: int = 3,
              seed: int = 0, config: TrackerConfig | None = None, cosine_check: bool = True) -> BenchReport:
    """Best-of-``repeats`` frames/second for association and full tracker steps."""
    best_assoc = best_e2e = 0.0
    for r in range(repeats):
        a, e = run_once(detections, dim, frames, seed, config)
        best_assoc = max(best_assoc, a)
        best_e2e = max(best_e2e, e)
    if cosine_check:
        ratio, b, s = cosine_ratio(detections, dim, seed)
    else:
        ratio = b = s = float("nan")
    return BenchReport(detections, dim, frames, best_assoc, best_e2e, ratio, b, s)
