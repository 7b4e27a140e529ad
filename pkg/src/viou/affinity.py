"""Appearance similarity and the fused IOU + ReID association cost.

The cost of pairing detection ``d`` with track ``t`` is

    cost = 1 - alpha * IOU(d, t) - beta * max(cos(R_d, R_t), 0)

with ``alpha + beta = 1``. Embeddings are L2-normalised once on the way in,
after which every cosine is a dot product and a whole frame's worth of them
is one matrix product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateVector, DimensionMismatch
from .geom import BBox, boxes_to_array, iou_matrix

DEFAULT_DIM = 2048


@dataclass(frozen=True)
class AssocParams:
    alpha: float = 0.7
    beta: float = 0.3
    sigma_iou: float = 0.6
    # appearance rescue: strong cosine plus a loose spatial sanity check
    sigma_reid: float = 0.7
    sigma_iou_relaxed: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"alpha and beta must be non-negative, got {self.alpha}, {self.beta}")
        if abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ValueError(f"alpha + beta must equal 1, got {self.alpha + self.beta!r}")
        for name in ("sigma_iou", "sigma_reid", "sigma_iou_relaxed"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @classmethod
    def with_beta(cls, beta: float, **kwargs) -> "AssocParams":
        return cls(alpha=1.0 - beta, beta=beta, **kwargs)


@dataclass
class CostMatrix:
    """Dense detections x tracks cost with an admissibility mask."""
    cost: np.ndarray
    admissible: np.ndarray

    @property
    def rows(self) -> int:
        return self.cost.shape[0]

    @property
    def cols(self) -> int:
        return self.cost.shape[1]

    @classmethod
    def from_arrays(cls, cost, admissible=None) -> "CostMatrix":
        cost = np.asarray(cost, dtype=np.float64)
        if cost.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {cost.shape}")
        if admissible is None:
            admissible = np.ones(cost.shape, dtype=bool)
        admissible = np.asarray(admissible, dtype=bool)
        if admissible.shape != cost.shape:
            raise ValueError(f"mask shape {admissible.shape} != cost shape {cost.shape}")
        return cls(cost, admissible)


def normalize(v, expected_dim: Optional[int] = None) -> np.ndarray:
    """Return ``v`` as a unit-norm float64 vector, validating it on the way."""
    arr = np.asarray(v, dtype=np.float64).ravel()
    if expected_dim is not None and arr.shape[0] != expected_dim:
        raise DimensionMismatch(f"expected dim {expected_dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateVector("embedding has non-finite entries")
    n = float(np.linalg.norm(arr))
    if n == 0.0:
        raise DegenerateVector("embedding has zero norm")
    return arr / n


def normalize_rows(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix of embeddings, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DegenerateVector("embedding matrix has non-finite entries")
    norms = np.linalg.norm(m, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise DegenerateVector(f"zero-norm embedding at row {int(bad[0])}")
    return m / norms[:, None]


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionMismatch(f"dims differ: {u.shape[0]} vs {v.shape[0]}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVector("cosine of a zero vector")
    c = float(np.dot(u, v)) / (nu * nv)
    return min(1.0, max(-1.0, c))


def batched_cosine(queries, gallery) -> np.ndarray:
    """All-pairs cosine similarity as a single normalised matrix product."""
    q = np.asarray(queries, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if g.ndim == 1:
        g = g[None, :]
    if q.shape[0] == 0 or g.shape[0] == 0:
        return np.zeros((q.shape[0], g.shape[0]))
    if q.shape[1] != g.shape[1]:
        raise DimensionMismatch(f"dims differ: {q.shape[1]} vs {g.shape[1]}")
    return unit_dot(normalize_rows(q), normalize_rows(g))


def unit_dot(qn: np.ndarray, gn: np.ndarray) -> np.ndarray:
    """Cosine matrix for rows that are already unit norm."""
    return np.clip(qn @ gn.T, -1.0, 1.0)


def pair_cost(iou_score: float, cos_score: float, p: AssocParams) -> float:
    # Written as alpha*(1-iou) + beta*(1-cos): equal to 1 - alpha*iou - beta*cos
    # when alpha+beta=1, but exact at the end points (cost 0 at iou=cos=1,
    # and exactly 1-iou when beta=0).
    c = max(cos_score, 0.0)
    return min(1.0, p.alpha * (1.0 - iou_score) + p.beta * (1.0 - c))


def cost_from_scores(ious: np.ndarray, cos: np.ndarray, p: AssocParams) -> np.ndarray:
    c = np.maximum(cos, 0.0)
    return np.minimum(1.0, p.alpha * (1.0 - ious) + p.beta * (1.0 - c))


def gate(ious: np.ndarray, cos: np.ndarray, has_app: np.ndarray, p: AssocParams) -> np.ndarray:
    """Admissibility mask: classic IOU gate, or strong appearance with loose overlap."""
    ok = ious >= p.sigma_iou
    if p.beta > 0.0:
        ok |= has_app & (cos >= p.sigma_reid) & (ious >= p.sigma_iou_relaxed)
    return ok


def cost_matrix_arrays(det_boxes: np.ndarray, det_emb: Optional[np.ndarray], det_has: Optional[np.ndarray],
                       trk_boxes: np.ndarray, trk_emb: Optional[np.ndarray], trk_has: Optional[np.ndarray],
                       p: AssocParams) -> CostMatrix:
    """Array-level cost matrix builder used on the tracker's hot path.

    ``*_emb`` rows must already be unit norm; rows whose ``*_has`` flag is
    False are ignored (their cosine term is 0 and only the IOU gate applies).
    """
    n, m = det_boxes.shape[0], trk_boxes.shape[0]
    ious = iou_matrix(det_boxes, trk_boxes)
    if n == 0 or m == 0 or det_emb is None or trk_emb is None or p.beta == 0.0:
        cos = np.zeros((n, m))
        has_app = np.zeros((n, m), dtype=bool)
    else:
        if det_emb.shape[1] != trk_emb.shape[1]:
            raise DimensionMismatch(f"dims differ: {det_emb.shape[1]} vs {trk_emb.shape[1]}")
        has_app = np.outer(det_has, trk_has)
        cos = np.where(has_app, unit_dot(det_emb, trk_emb), 0.0)
    return CostMatrix(cost_from_scores(ious, cos, p), gate(ious, cos, has_app, p))


def _stack(embs: Sequence[Optional[np.ndarray]]):
    present = [e for e in embs if e is not None]
    if not present:
        return None, np.zeros(len(embs), dtype=bool)
    dim = np.asarray(present[0]).size
    out = np.zeros((len(embs), dim))
    has = np.zeros(len(embs), dtype=bool)
    for i, e in enumerate(embs):
        if e is None:
            continue
        out[i] = normalize(e, expected_dim=dim)
        has[i] = True
    return out, has


def build_cost_matrix(detections: Sequence[tuple[BBox, Optional[np.ndarray]]],
                      tracks: Sequence[tuple[BBox, Optional[np.ndarray]]],
                      p: AssocParams) -> CostMatrix:
    """Cost matrix for ``(box, embedding-or-None)`` detections against tracks."""
    det_boxes = boxes_to_array([d[0] for d in detections])
    trk_boxes = boxes_to_array([t[0] for t in tracks])
    det_emb, det_has = _stack([d[1] for d in detections])
    trk_emb, trk_has = _stack([t[1] for t in tracks])
    return cost_matrix_arrays(det_boxes, det_emb, det_has, trk_boxes, trk_emb, trk_has, p)


def scalar_cosine_loop(queries, gallery) -> np.ndarray:
    """Plain per-pair loop; the reference that :func:`batched_cosine` is benchmarked against."""
    out = np.zeros((len(queries), len(gallery)))
    for i, u in enumerate(queries):
        for j, v in enumerate(gallery):
            dot = nu = nv = 0.0
            for a, b in zip(u, v):
                dot += a * b
                nu += a * a
                nv += b * b
            out[i, j] = dot / math.sqrt(nu * nv)
    return out
