"""Reading and writing detections, embedding sidecars, ground truth and tracks.

Text formats are header-free comma-separated rows:

* detections ``<seq>.det.csv``: ``frame,x,y,w,h,confidence[,class_id[,embedding_row]]``
* ground truth ``<seq>.gt.csv`` and tracks ``<seq>.trk.csv``:
  ``frame,id,x,y,w,h,confidence,-1,-1,-1`` (floats printed with 6 decimals)

The embedding sidecar ``<seq>.emb`` is binary, little-endian: the 4-byte magic
``EMB1``, ``uint32`` dim, ``uint64`` count, then ``count * dim`` ``float32``
values row-major. Parsers reject malformed input instead of repairing it.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DegenerateVector, DimensionMismatch, FormatError, ParseError, RangeError
from .geom import BBox

MAGIC = b"EMB1"
HEADER = struct.Struct("<4sIQ")
TOP_K = 50
RESCALE_FACTOR = 1.25


@dataclass(frozen=True)
class DetectionRecord:
    frame: int
    x: float
    y: float
    w: float
    h: float
    confidence: float
    class_id: int = -1
    embedding_row: int = -1

    @property
    def bbox(self) -> BBox:
        return BBox(self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class TrackRecord:
    frame: int
    track_id: int
    x: float
    y: float
    w: float
    h: float
    confidence: float = -1.0

    @property
    def bbox(self) -> BBox:
        return BBox(self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class EmbeddingSidecar:
    dim: int
    count: int
    data: np.ndarray  # (count, dim) float32, read-only

    def __len__(self) -> int:
        return self.count

    def row(self, i: int) -> np.ndarray:
        if not 0 <= i < self.count:
            raise IndexError(f"embedding row {i} out of range for sidecar with {self.count} rows")
        return self.data[i]


# -- text helpers -----------------------------------------------------------

def _lines(path):
    with open(path, "r", encoding="ascii", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if s:
                yield lineno, s


def _int(tok: str, name: str, lineno: int, path) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"{name} is not an integer: {tok!r}", lineno, path) from None


def _float(tok: str, name: str, lineno: int, path) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"{name} is not a number: {tok!r}", lineno, path) from None
    if not math.isfinite(v):
        raise RangeError(f"{name} is not finite: {tok!r}", lineno, path)
    return v


def _box_fields(toks, lineno, path):
    x = _float(toks[0], "x", lineno, path)
    y = _float(toks[1], "y", lineno, path)
    w = _float(toks[2], "w", lineno, path)
    h = _float(toks[3], "h", lineno, path)
    if w <= 0 or h <= 0:
        raise RangeError(f"box size must be positive, got w={w} h={h}", lineno, path)
    return x, y, w, h


def _frame(tok, lineno, path) -> int:
    f = _int(tok, "frame", lineno, path)
    if f < 0:
        raise RangeError(f"frame must be non-negative, got {f}", lineno, path)
    return f


# -- detections -------------------------------------------------------------

def parse_detections(path) -> dict[int, list[DetectionRecord]]:
    """Group detection rows by frame; file order is kept within a frame."""
    frames: dict[int, list[DetectionRecord]] = {}
    for lineno, line in _lines(path):
        toks = [t.strip() for t in line.split(",")]
        if not 6 <= len(toks) <= 8:
            raise ParseError(f"expected 6 to 8 fields, got {len(toks)}", lineno, path)
        frame = _frame(toks[0], lineno, path)
        x, y, w, h = _box_fields(toks[1:5], lineno, path)
        conf = _float(toks[5], "confidence", lineno, path)
        if not 0.0 <= conf <= 1.0:
            raise RangeError(f"confidence must lie in [0, 1], got {conf}", lineno, path)
        cls = _int(toks[6], "class_id", lineno, path) if len(toks) > 6 else -1
        row = _int(toks[7], "embedding_row", lineno, path) if len(toks) > 7 else -1
        if row < -1:
            raise RangeError(f"embedding_row must be >= -1, got {row}", lineno, path)
        frames.setdefault(frame, []).append(DetectionRecord(frame, x, y, w, h, conf, cls, row))
    return dict(sorted(frames.items()))


def format_detection(r: DetectionRecord) -> str:
    return (f"{r.frame},{r.x:.6f},{r.y:.6f},{r.w:.6f},{r.h:.6f},{r.confidence:.6f},"
            f"{r.class_id},{r.embedding_row}")


def write_detections(frames: Mapping[int, Sequence[DetectionRecord]], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for f in sorted(frames):
            for r in frames[f]:
                fh.write(format_detection(r) + "\n")


def rescale_scores(frames: Mapping[int, Sequence[DetectionRecord]], top_k: int = TOP_K,
                   factor: float = RESCALE_FACTOR) -> dict[int, list[DetectionRecord]]:
    """Boost the ``top_k`` most confident detections of each frame by ``factor``, capped at 1.

    Ties in confidence are broken by file order.
    """
    out = {}
    for f, dets in frames.items():
        order = sorted(range(len(dets)), key=lambda k: (-dets[k].confidence, k))
        boosted = set(order[:top_k])
        out[f] = [replace(d, confidence=min(1.0, d.confidence * factor)) if k in boosted else d
                  for k, d in enumerate(dets)]
    return out


def filter_confidence(frames: Mapping[int, Sequence], threshold: float) -> dict[int, list]:
    """Keep detections with confidence strictly above ``threshold``."""
    return {f: [d for d in dets if d.confidence > threshold] for f, dets in frames.items()}


# -- sidecar ---------------------------------------------------------------

def write_sidecar(path, rows) -> None:
    data = np.ascontiguousarray(np.asarray(rows, dtype="<f4"))
    if data.ndim != 2:
        raise DimensionMismatch(f"sidecar rows must form a 2-D matrix, got shape {data.shape}")
    count, dim = data.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, dim, count))
        fh.write(data.tobytes(order="C"))


def load_sidecar(path, expected_dim: Optional[int] = None) -> EmbeddingSidecar:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: file has {len(raw)} bytes, shorter than the {HEADER.size}-byte header")
    magic, dim, count = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if dim == 0:
        raise FormatError(f"{path}: dim must be positive")
    expected = HEADER.size + 4 * dim * count
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for dim={dim} count={count}, got {len(raw)}")
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatch(f"{path}: sidecar dim {dim} != expected {expected_dim}")
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(count, dim)
    if count:
        finite = np.isfinite(data).all(axis=1)
        if not finite.all():
            k = int(np.flatnonzero(~finite)[0])
            raise DegenerateVector(f"{path}: row {k} (byte {HEADER.size + 4 * dim * k}) has non-finite values")
        zero = ~np.any(data != 0, axis=1)
        if zero.any():
            k = int(np.flatnonzero(zero)[0])
            raise DegenerateVector(f"{path}: row {k} (byte {HEADER.size + 4 * dim * k}) has zero norm")
    return EmbeddingSidecar(int(dim), int(count), data)


# -- ground truth / tracks ------------------------------------------------

def format_track_record(r: TrackRecord) -> str:
    return (f"{r.frame},{r.track_id},{r.x:.6f},{r.y:.6f},{r.w:.6f},{r.h:.6f},"
            f"{r.confidence:.6f},-1,-1,-1")


def write_records(records: Iterable[TrackRecord], path) -> None:
    rows = sorted(records, key=lambda r: (r.frame, r.track_id))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for r in rows:
            fh.write(format_track_record(r) + "\n")


def tracks_to_records(tracks) -> list[TrackRecord]:
    """Flatten tracker output into one record per (frame, track)."""
    out = []
    for t in tracks:
        for b in t.boxes:
            out.append(TrackRecord(b.frame, t.id, b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h, b.confidence))
    out.sort(key=lambda r: (r.frame, r.track_id))
    return out


def write_tracks(tracks, path) -> None:
    write_records(tracks_to_records(tracks), path)


def parse_ground_truth(path) -> list[TrackRecord]:
    """Parse a ground-truth or track file. ``(frame, id)`` pairs must be unique."""
    seen: dict[tuple[int, int], int] = {}
    out = []
    for lineno, line in _lines(path):
        toks = [t.strip() for t in line.split(",")]
        if not 6 <= len(toks) <= 10:
            raise ParseError(f"expected 6 to 10 fields, got {len(toks)}", lineno, path)
        frame = _frame(toks[0], lineno, path)
        tid = _int(toks[1], "id", lineno, path)
        x, y, w, h = _box_fields(toks[2:6], lineno, path)
        extra = [_float(t, f"field {k + 7}", lineno, path) for k, t in enumerate(toks[6:])]
        conf = extra[0] if extra else -1.0
        key = (frame, tid)
        if key in seen:
            raise ParseError(f"duplicate (frame={frame}, id={tid}); first seen on line {seen[key]}", lineno, path)
        seen[key] = lineno
        out.append(TrackRecord(frame, tid, x, y, w, h, conf))
    return out


parse_tracks = parse_ground_truth


def records_to_detections(frames: Mapping[int, Sequence[DetectionRecord]],
                          sidecar: Optional[EmbeddingSidecar] = None) -> dict:
    """Turn parsed records into tracker detections, attaching sidecar rows.

    Without a sidecar every detection is appearance-less.
    """
    from .tracker import Detection

    out = {}
    for f, recs in frames.items():
        dets = []
        for r in recs:
            emb = None
            if sidecar is not None and r.embedding_row >= 0:
                if r.embedding_row >= sidecar.count:
                    raise FormatError(f"frame {f}: embedding_row {r.embedding_row} out of range "
                                      f"for sidecar with {sidecar.count} rows")
                emb = sidecar.data[r.embedding_row]
            dets.append(Detection(r.bbox, r.confidence, emb, r.class_id))
        out[f] = dets
    return out


def sequence_paths(directory, seq: str) -> dict[str, Path]:
    d = Path(directory)
    return {"det": d / f"{seq}.det.csv", "emb": d / f"{seq}.emb",
            "gt": d / f"{seq}.gt.csv", "trk": d / f"{seq}.trk.csv"}
