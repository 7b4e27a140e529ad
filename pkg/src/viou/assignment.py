"""Gated linear assignment of detections (rows) to tracks (columns).

``solve`` returns, among the matchings that use admissible cells only, one of
maximum cardinality with minimum total cost. Inadmissible cells are simply not
edges of the bipartite graph, so no sentinel cost is ever involved.

The solver splits the admissibility graph into connected components. Tracking
workloads are dominated by 1x1 components, which are resolved directly; the rest
go through successive shortest augmenting paths (Dijkstra on reduced costs with
Johnson potentials).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .affinity import CostMatrix


@dataclass
class Assignment:
    matches: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)

    @property
    def total_cost(self) -> float:
        return math.fsum(c for _, _, c in self.matches)

    def pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j, _ in self.matches]


def _finish(n_rows: int, n_cols: int, cost: np.ndarray, pairs) -> Assignment:
    pairs = sorted(pairs)
    used_r = {i for i, _ in pairs}
    used_c = {j for _, j in pairs}
    return Assignment(
        matches=[(i, j, float(cost[i, j])) for i, j in pairs],
        unmatched_detections=[i for i in range(n_rows) if i not in used_r],
        unmatched_tracks=[j for j in range(n_cols) if j not in used_c],
    )


def _components(adj_rows: list[list[int]], n_cols: int) -> list[tuple[list[int], list[int]]]:
    adj_cols: list[list[int]] = [[] for _ in range(n_cols)]
    for i, cols in enumerate(adj_rows):
        for j in cols:
            adj_cols[j].append(i)
    seen_r = [False] * len(adj_rows)
    seen_c = [False] * n_cols
    comps = []
    for start, cols in enumerate(adj_rows):
        if seen_r[start] or not cols:
            continue
        rows_c, cols_c = [], []
        seen_r[start] = True
        stack = [start]
        while stack:
            i = stack.pop()
            rows_c.append(i)
            for j in adj_rows[i]:
                if not seen_c[j]:
                    seen_c[j] = True
                    cols_c.append(j)
                    for k in adj_cols[j]:
                        if not seen_r[k]:
                            seen_r[k] = True
                            stack.append(k)
        comps.append((sorted(rows_c), sorted(cols_c)))
    return comps


def _ssp(rows: list[int], cols: list[int], adj_rows: list[list[int]], cost: np.ndarray) -> list[tuple[int, int]]:
    """Successive shortest paths on one connected component.

    Node layout: rows are 0..R-1, columns R..R+C-1, sink R+C. The source is
    implicit: every free row starts Dijkstra at distance 0.
    """
    R, C = len(rows), len(cols)
    col_pos = {j: k for k, j in enumerate(cols)}
    w = [[(col_pos[j], float(cost[i, j])) for j in adj_rows[i]] for i in rows]
    lo = min(c for edges in w for _, c in edges)
    if lo < 0.0:
        # a constant shift leaves the optimum of every fixed cardinality unchanged
        w = [[(k, c - lo) for k, c in edges] for edges in w]

    sink = R + C
    n_nodes = R + C + 1
    pot = [0.0] * n_nodes
    match_r = [-1] * R
    match_c = [-1] * C
    inf = math.inf

    while True:
        dist = [inf] * n_nodes
        prev = [-1] * n_nodes
        done = [False] * n_nodes
        heap = []
        for r in range(R):
            if match_r[r] < 0:
                dist[r] = 0.0
                heap.append((0.0, r))
        heapq.heapify(heap)
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if u < R:
                pu = pot[u]
                mr = match_r[u]
                for k, c in w[u]:
                    if k == mr:
                        continue
                    v = R + k
                    nd = d + c + pu - pot[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        prev[v] = u
                        heapq.heappush(heap, (nd, v))
            elif u < sink:
                k = u - R
                r = match_c[k]
                if r >= 0:
                    # residual back edge col -> matched row with cost -w
                    back = next(c for kk, c in w[r] if kk == k)
                    nd = d - back + pot[u] - pot[r]
                    if nd < dist[r]:
                        dist[r] = nd
                        prev[r] = u
                        heapq.heappush(heap, (nd, r))
                else:
                    nd = d + pot[u] - pot[sink]
                    if nd < dist[sink]:
                        dist[sink] = nd
                        prev[sink] = u
                        heapq.heappush(heap, (nd, sink))
        if dist[sink] == inf:
            break
        for v in range(n_nodes):
            if dist[v] < inf:
                pot[v] += dist[v]
        # walk back sink <- col <- row <- col <- ... <- free row
        v = prev[sink]
        while v >= 0:
            r = prev[v]
            k = v - R
            match_c[k] = r
            nxt = prev[r]
            match_r[r] = k
            v = nxt
    return [(rows[r], cols[match_r[r]]) for r in range(R) if match_r[r] >= 0]


def solve(matrix: CostMatrix) -> Assignment:
    cost, adm = matrix.cost, matrix.admissible
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0 or not adm.any():
        return _finish(n_rows, n_cols, cost, [])
    adj_rows = [np.flatnonzero(adm[i]).tolist() for i in range(n_rows)]
    pairs = []
    for rows, cols in _components(adj_rows, n_cols):
        if len(rows) == 1:
            i = rows[0]
            j = min(cols, key=lambda jj: (cost[i, jj], jj))
            pairs.append((i, j))
        elif len(cols) == 1:
            j = cols[0]
            i = min(rows, key=lambda ii: (cost[ii, j], ii))
            pairs.append((i, j))
        else:
            pairs.extend(_ssp(rows, cols, adj_rows, cost))
    return _finish(n_rows, n_cols, cost, pairs)


def solve_greedy(matrix: CostMatrix) -> Assignment:
    """Repeatedly claim the cheapest admissible cell whose row and column are free."""
    cost, adm = matrix.cost, matrix.admissible
    n_rows, n_cols = cost.shape
    ii, jj = np.nonzero(adm)
    order = np.lexsort((jj, ii, cost[ii, jj]))
    used_r, used_c = set(), set()
    pairs = []
    for k in order:
        i, j = int(ii[k]), int(jj[k])
        if i in used_r or j in used_c:
            continue
        used_r.add(i)
        used_c.add(j)
        pairs.append((i, j))
    return _finish(n_rows, n_cols, cost, pairs)
