"""Rectangular linear assignment and IoU-based box association.

The solver is a shortest augmenting path method in the Jonker-Volgenant
family (no initialisation phase), working on P <= Q matrices and transposing
otherwise. Among equal-cost optima the lexicographically smallest pair list
is returned so results do not depend on solver internals.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.sparse import bmat, csr_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import BoundingBox, boxes_to_array, iou_matrix

Pair = tuple[int, int]
# below this many entries component splitting costs more than it saves
_SMALL = 16


class NonFiniteCost(ValueError):
    pass


def _augmenting_path(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Min-cost assignment of every row of a P <= Q matrix.

    Returns col4row and the dual potentials (u, v) with
    cost - u[:, None] - v[None, :] >= 0, tight on assigned pairs, and v == 0
    on unassigned columns.
    """
    nr, nc = cost.shape
    u = np.zeros(nr)
    v = np.zeros(nc)
    col4row = np.full(nr, -1)
    row4col = np.full(nc, -1)
    path = np.full(nc, -1)
    cols = np.arange(nc)

    for cur_row in range(nr):
        shortest = np.full(nc, np.inf)
        scanned_cols = np.zeros(nc, dtype=bool)
        scanned_rows = [cur_row]
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink < 0:
            reduced = min_val + cost[i] - u[i] - v
            better = (~scanned_cols) & (reduced < shortest)
            path[better] = i
            shortest[better] = reduced[better]

            open_short = np.where(scanned_cols, np.inf, shortest)
            lowest = open_short.min()
            if not np.isfinite(lowest):
                raise NonFiniteCost("assignment problem is infeasible")
            ties = cols[open_short == lowest]
            free = ties[row4col[ties] < 0]
            j = int(free[0]) if free.size else int(ties[0])

            min_val = lowest
            scanned_cols[j] = True
            if row4col[j] < 0:
                sink = j
            else:
                i = int(row4col[j])
                scanned_rows.append(i)

        u[cur_row] += min_val
        for r in scanned_rows[1:]:
            u[r] += min_val - shortest[col4row[r]]
        v[scanned_cols] -= min_val - shortest[scanned_cols]

        j = sink
        while True:
            r = int(path[j])
            row4col[j] = r
            col4row[r], j = j, col4row[r]
            if r == cur_row:
                break
    return col4row, u, v


def _solve_raw(cost: np.ndarray) -> tuple[list[Pair], np.ndarray]:
    """Optimal pairs plus reduced costs in the caller's orientation."""
    if cost.shape[0] <= cost.shape[1]:
        col4row, u, v = _augmenting_path(cost)
        pairs = [(r, int(c)) for r, c in enumerate(col4row)]
        reduced = cost - u[:, None] - v[None, :]
    else:
        col4row, u, v = _augmenting_path(cost.T)
        pairs = sorted((int(c), r) for r, c in enumerate(col4row))
        reduced = cost - v[:, None] - u[None, :]
    return pairs, reduced


def _total(cost: np.ndarray, pairs: Sequence[Pair]) -> float:
    return float(sum(cost[r, c] for r, c in pairs))


def _lexicographic(cost: np.ndarray, pairs: list[Pair], reduced: np.ndarray) -> list[Pair]:
    """Walk rows in order and move each to the smallest column that still
    admits an optimal completion. Only tight (zero reduced cost) entries can
    belong to an optimum, so generic inputs need no extra solves."""
    n_rows, n_cols = cost.shape
    need = min(n_rows, n_cols)
    optimum = _total(cost, pairs)
    scale = max(1.0, float(np.abs(cost).max()))
    tol = 1e-12 * scale * max(n_rows, n_cols)
    cur = dict(pairs)
    fixed: list[Pair] = []
    used: set[int] = set()

    for r in range(n_rows):
        current = cur.get(r)
        tight = [
            c for c in np.flatnonzero(reduced[r] <= tol).tolist()
            if c not in used and (current is None or c < current)
        ]
        for c in tight:
            rows_left = list(range(r + 1, n_rows))
            cols_left = [q for q in range(n_cols) if q not in used and q != c]
            head = fixed + [(r, c)]
            tail: list[Pair] = []
            if rows_left and cols_left:
                sub = cost[np.ix_(rows_left, cols_left)]
                sub_pairs, _ = _solve_raw(sub)
                tail = [(rows_left[a], cols_left[b]) for a, b in sub_pairs]
            if len(head) + len(tail) != need:
                continue
            if abs(_total(cost, head) + _total(cost, tail) - optimum) <= tol:
                cur = dict(head + tail)
                current = c
                break
        if current is not None:
            fixed.append((r, current))
            used.add(current)
    return sorted(fixed)


def solve_assignment(costs) -> list[Pair]:
    """Minimum-total-cost one-to-one matching of min(P, Q) rows and columns.

    Pairs come back sorted by row.
    """
    cost = np.asarray(costs, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {cost.shape}")
    if cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCost("cost matrix contains NaN or infinite entries")
    pairs, reduced = _solve_raw(cost)
    return _lexicographic(cost, pairs, reduced)


def assignment_cost(costs, pairs: Sequence[Pair]) -> float:
    return _total(np.asarray(costs, dtype=np.float64), pairs)


def match_weights(weights: np.ndarray) -> list[Pair]:
    """Maximum-weight matching restricted to strictly positive entries.

    Solved as an assignment on cost -weight per connected component of the
    positive-entry graph; zero entries never enter the result.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.size == 0:
        return []
    n_rows, n_cols = weights.shape
    pos = weights > 0
    if not pos.any():
        return []
    if n_rows * n_cols <= _SMALL:
        return [(a, b) for a, b in solve_assignment(-np.where(pos, weights, 0.0)) if pos[a, b]]
    adj = csr_matrix(pos.astype(np.int8))
    graph = bmat([[None, adj], [adj.T, None]], format="csr")
    _, labels = connected_components(graph, directed=False)
    row_lab, col_lab = labels[:n_rows], labels[n_rows:]
    out: list[Pair] = []
    for comp in np.unique(row_lab[pos.any(axis=1)]):
        rows = np.flatnonzero(row_lab == comp)
        cols = np.flatnonzero(col_lab == comp)
        sub = weights[np.ix_(rows, cols)]
        if sub.shape == (1, 1):
            out.append((int(rows[0]), int(cols[0])))
            continue
        for a, b in solve_assignment(-np.where(sub > 0, sub, 0.0)):
            if sub[a, b] > 0:
                out.append((int(rows[a]), int(cols[b])))
    return sorted(out)


def associate_iou(ious: np.ndarray, min_iou: float = 0.0) -> list[Pair]:
    """Assignment on cost 1 - IoU, then removal of pairs with IoU <= min_iou.

    With every row of the smaller side matched, the total cost equals
    min(P, Q) minus the summed IoU of the matched pairs, so minimising it is a
    maximum-weight matching on IoU and splits over connected components of the
    overlap graph; boxes without any overlap only ever produce filtered pairs.
    """
    ious = np.asarray(ious, dtype=np.float64)
    return [(a, b) for a, b in match_weights(ious) if ious[a, b] > min_iou]


def associate_boxes(a: Sequence[BoundingBox], b: Sequence[BoundingBox], min_iou: float = 0.0) -> list[Pair]:
    if not a or not b:
        return []
    return associate_iou(iou_matrix(boxes_to_array(a), boxes_to_array(b)), min_iou)
