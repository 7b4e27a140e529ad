"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _perms(m: int, n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(m), n)), dtype=np.intp).reshape(-1, n)


def brute_force_min_cost(cost: np.ndarray) -> float:
    """Exact minimum over all full matchings of the smaller side (all cells admissible)."""
    n, m = cost.shape
    if n == 0 or m == 0:
        return 0.0
    if n > m:
        cost = cost.T
        n, m = m, n
    perms = _perms(m, n)
    sums = cost[np.arange(n), perms].sum(axis=1)
    # re-check near-ties with exact summation
    near = np.flatnonzero(sums <= sums.min() + 1e-9)
    return min(math.fsum(cost[np.arange(n), perms[k]]) for k in near)


def brute_force_gated(cost: np.ndarray, adm: np.ndarray) -> tuple[int, float]:
    """(max cardinality, min cost at that cardinality) over admissible partial matchings."""
    n, m = cost.shape
    best = (0, 0.0)
    cells = [(i, j) for i in range(n) for j in range(m) if adm[i, j]]

    def rec(start, used_r, used_c, chosen):
        nonlocal best
        k, c = len(chosen), math.fsum(cost[i, j] for i, j in chosen)
        if k > best[0] or (k == best[0] and c < best[1]):
            best = (k, c)
        for idx in range(start, len(cells)):
            i, j = cells[idx]
            if i in used_r or j in used_c:
                continue
            chosen.append((i, j))
            rec(idx + 1, used_r | {i}, used_c | {j}, chosen)
            chosen.pop()

    rec(0, frozenset(), frozenset(), [])
    return best


def _box_iou(a, b):
    ax2, ay2, bx2, by2 = a[0] + a[2], a[1] + a[3], b[0] + b[2], b[1] + b[3]
    iw = min(ax2, bx2) - max(a[0], b[0])
    ih = min(ay2, by2) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / ((ax2 - a[0]) * (ay2 - a[1]) + (bx2 - b[0]) * (by2 - b[1]) - inter)


def _cv(hist, steps, window, backward=False):
    pts = hist[:window] if backward else hist[-window:]
    f0, b0 = pts[0]
    f1, b1 = pts[-1]
    ref = b0 if backward else b1
    if len(pts) < 2:
        return ref
    vx = ((b1[0] + b1[2] / 2) - (b0[0] + b0[2] / 2)) / (f1 - f0)
    vy = ((b1[1] + b1[3] / 2) - (b0[1] + b0[3] / 2)) / (f1 - f0)
    if vx == 0 and vy == 0:
        return ref
    s = -steps if backward else steps
    cx, cy = ref[0] + ref[2] / 2 + vx * s, ref[1] + ref[3] / 2 + vy * s
    return (cx - ref[2] / 2, cy - ref[3] / 2, ref[2], ref[3])


def plain_viou(frames, sigma_iou=0.6, ttl=15, t_min=3, window=3):
    """Plain IOU-only V-IOU with box extrapolation, written from scratch.

    ``frames`` maps frame -> list of (x, y, w, h, conf). Returns a list of
    tracks, each a list of (frame, box, kind) with kind in {"d", "p", "i"}.
    Matching is maximum-cardinality min-cost, emulated via a large reward per
    admissible pair with scipy's Hungarian solver.
    """
    from scipy.optimize import linear_sum_assignment

    live, recent, done = [], [], []
    next_id = 1
    if not frames:
        return []
    for f in range(min(frames), max(frames) + 1):
        dets = frames.get(f, [])
        preds = [_cv(t["det"], f - t["det"][-1][0], window) for t in live]
        n, m = len(dets), len(live)
        matched_d, matched_t = {}, set()
        if n and m:
            ious = np.array([[_box_iou(d[:4], p) for p in preds] for d in dets])
            adm = ious >= sigma_iou
            big = float(n + m + 1)
            c = np.where(adm, (1.0 - ious) - big, 0.0)
            r, k = linear_sum_assignment(c)
            for i, j in zip(r, k):
                if adm[i, j]:
                    matched_d[i] = j
                    matched_t.add(j)
        nxt = []
        for i, j in matched_d.items():
            t = live[j]
            t["boxes"].append((f, tuple(dets[i][:4]), "d"))
            t["det"].append((f, tuple(dets[i][:4])))
            t["coast"] = 0
        for j, t in enumerate(live):
            if j in matched_d.values():
                nxt.append(t)
                continue
            t["coast"] += 1
            if t["coast"] > ttl:
                while t["boxes"][-1][2] != "d":
                    t["boxes"].pop()
                t["expired"] = f
                done.append(t)
                recent.append(t)
            else:
                t["boxes"].append((f, preds[j], "p"))
                nxt.append(t)
        recent = [t for t in recent if f - t["expired"] <= ttl]
        for i, d in enumerate(dets):
            if i in matched_d:
                continue
            box = tuple(d[:4])
            t = {"id": next_id, "boxes": [(f, box, "d")], "det": [(f, box)], "coast": 0}
            next_id += 1
            best = None
            for cand in sorted(recent, key=lambda c: c["id"]):
                lf, lb = cand["det"][-1]
                if lf >= f:
                    continue
                s = _box_iou(box, lb)
                if s >= sigma_iou and (best is None or 1.0 - s < best[0]):
                    best = (1.0 - s, cand)
            if best is None:
                nxt.append(t)
                continue
            cand = best[1]
            f0, a = cand["det"][-1]
            for g in range(f0 + 1, f):
                u = (g - f0) / (f - f0)
                x1 = a[0] + u * (box[0] - a[0])
                y1 = a[1] + u * (box[1] - a[1])
                x2 = a[0] + a[2] + u * (box[0] + box[2] - a[0] - a[2])
                y2 = a[1] + a[3] + u * (box[1] + box[3] - a[1] - a[3])
                cand["boxes"].append((g, (x1, y1, x2 - x1, y2 - y1), "i"))
            cand["boxes"].extend(t["boxes"])
            cand["det"].extend(t["det"])
            cand["coast"] = 0
            recent.remove(cand)
            done.remove(cand)
            nxt.append(cand)
        live = sorted(nxt, key=lambda t: t["id"])
    for t in live:
        while t["boxes"][-1][2] != "d":
            t["boxes"].pop()
        done.append(t)
    keep = [t for t in done if len(t["det"]) >= t_min]
    return [t["boxes"] for t in sorted(keep, key=lambda t: t["id"])]
