"""Tracking evaluation: HOTA family, CLEAR MOTA and counting error.

HOTA matching
-------------
For every IoU gate alpha the per-frame matching between predictions and
ground truth should maximise HOTA_alpha. Only the matrix ``N[g, p]`` of
matched-pair counts per (ground-truth id, predicted id) enters the score, so
the matcher works on those counts:

1. global potential: how often each (g, p) pair passes the gate anywhere,
   turned into a Jaccard-style alignment score;
2. per-frame assignment maximising that score, IoU breaking ties;
3. ascent on the exact HOTA_alpha objective, alternating two move types
   until neither improves: re-matching one overlap component of one frame,
   and re-choosing every partner of one identity (or of two identities that
   compete for a partner) across all their frames.

On small problems the ascent also runs from a pure max-IoU start and from
the empty matching, and the best local optimum is kept. Large problems run
the first start only and restrict identity moves to small state spaces, so
the result is never worse than the plain two-pass matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterable, Sequence

import numpy as np

from .assignment import match_weights
from .geometry import BoundingBox, iou_matrix

ALPHAS = np.round(np.arange(1, 20) * 0.05, 10)
# slack on the alpha gate so 0.3 admits an IoU computed as 0.29999999999999993
GATE_EPS = 1e-12
_TIE = 1e-10
_MAX_ENUM_EDGES = 10
_MAX_SWEEPS = 50
_MAX_DP_STATES = 20_000
_STARTS = ("potential", "iou", "empty")
# above this many gated pairs only the first start runs and identity moves
# are limited to small state spaces
_FULL_SEARCH_EDGES = 400
_LARGE_DP_STATES = 64


class EvaluationError(ValueError):
    pass


class InvalidAlpha(EvaluationError):
    pass


class EmptyGroundTruth(EvaluationError):
    pass


class ZeroGroundTruth(EvaluationError):
    pass


@dataclass(frozen=True)
class LabeledBox:
    frame: int
    track_id: int
    box: BoundingBox
    visibility: float = 1.0
    conf: float = 1.0


@dataclass
class MatchSet:
    alpha: float
    tp: list[tuple[LabeledBox, LabeledBox]]  # (prediction, ground truth)
    fn: list[LabeledBox]
    fp: list[LabeledBox]


@dataclass
class HotaReport:
    hota: float
    deta: float
    assa: float
    hota_alpha: np.ndarray
    deta_alpha: np.ndarray
    assa_alpha: np.ndarray
    mota: float
    cbyt: int
    cbyt_gt: int
    rel_error: float
    # pooled sufficient statistics
    tp: np.ndarray = field(repr=False)
    fn: np.ndarray = field(repr=False)
    fp: np.ndarray = field(repr=False)
    assoc: np.ndarray = field(repr=False)
    mota_errors: int = 0
    n_gt: int = 0

    def summary(self) -> dict:
        return {
            "HOTA": self.hota,
            "DetA": self.deta,
            "AssA": self.assa,
            "MOTA": self.mota,
            "CbyT": self.cbyt,
            "CbyT-GT": self.cbyt_gt,
            "RelErr": self.rel_error,
        }

    def to_dict(self) -> dict:
        out = self.summary()
        out["alpha"] = ALPHAS.tolist()
        out["HOTA_alpha"] = self.hota_alpha.tolist()
        out["DetA_alpha"] = self.deta_alpha.tolist()
        out["AssA_alpha"] = self.assa_alpha.tolist()
        out["TP_alpha"] = self.tp.tolist()
        out["FN_alpha"] = self.fn.tolist()
        out["FP_alpha"] = self.fp.tolist()
        out["assoc_alpha"] = self.assoc.tolist()
        out["mota_errors"] = self.mota_errors
        out["n_gt"] = self.n_gt
        return out


def counting_error(cbyt: int, gt: int) -> float:
    if gt <= 0:
        raise ZeroGroundTruth("ground-truth count must be positive")
    return abs(cbyt - gt) / gt


class _Prepared:
    """Per-frame id indices and IoU matrices for one prediction/ground-truth pair."""

    def __init__(self, pred: Sequence[LabeledBox], gt: Sequence[LabeledBox]):
        self.pred = list(pred)
        self.gt = list(gt)
        self.gt_labels = sorted({b.track_id for b in self.gt})
        self.pr_labels = sorted({b.track_id for b in self.pred})
        gmap = {t: i for i, t in enumerate(self.gt_labels)}
        pmap = {t: i for i, t in enumerate(self.pr_labels)}
        self.frames = sorted({b.frame for b in self.gt} | {b.frame for b in self.pred})
        by_frame_g: dict[int, list[int]] = {f: [] for f in self.frames}
        by_frame_p: dict[int, list[int]] = {f: [] for f in self.frames}
        for k, b in enumerate(self.gt):
            by_frame_g[b.frame].append(k)
        for k, b in enumerate(self.pred):
            by_frame_p[b.frame].append(k)
        self.g_rows, self.p_rows, self.g_idx, self.p_idx, self.ious = [], [], [], [], []
        for f in self.frames:
            gr, pr = by_frame_g[f], by_frame_p[f]
            self.g_rows.append(np.array(gr, dtype=np.intp))
            self.p_rows.append(np.array(pr, dtype=np.intp))
            self.g_idx.append(np.array([gmap[self.gt[k].track_id] for k in gr], dtype=np.intp))
            self.p_idx.append(np.array([pmap[self.pred[k].track_id] for k in pr], dtype=np.intp))
            ga = np.array([self.gt[k].box.as_tuple() for k in gr]).reshape(-1, 4)
            pa = np.array([self.pred[k].box.as_tuple() for k in pr]).reshape(-1, 4)
            self.ious.append(iou_matrix(ga, pa))
        self.g_count = np.bincount([gmap[b.track_id] for b in self.gt], minlength=len(self.gt_labels)).astype(float)
        self.p_count = np.bincount([pmap[b.track_id] for b in self.pred], minlength=len(self.pr_labels)).astype(float)
        self.n_gt = len(self.gt)
        self.n_pred = len(self.pred)


def hota_from_counts(n: np.ndarray, g_count: np.ndarray, p_count: np.ndarray) -> tuple[float, float, float, float, float]:
    """(tp, assoc_sum, DetA, AssA, HOTA) of one alpha from the matched-pair count matrix."""
    n = np.asarray(n, dtype=float)
    tp = float(n.sum())
    total = float(g_count.sum() + p_count.sum())
    if tp == 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    denom = g_count[:, None] + p_count[None, :] - n
    assoc = float(np.sum(np.where(n > 0, n * n / np.where(denom > 0, denom, 1.0), 0.0)))
    det = tp / (total - tp)
    ass = assoc / tp
    return tp, assoc, det, ass, float(np.sqrt(det * ass))


class _AlphaMatcher:
    def __init__(self, data: _Prepared, alpha: float):
        self.d = data
        self.alpha = alpha
        self.gated = [iou >= alpha - GATE_EPS for iou in data.ious]
        self.full = sum(int(g.sum()) for g in self.gated) <= _FULL_SEARCH_EDGES
        self.max_states = _MAX_DP_STATES if self.full else _LARGE_DP_STATES
        self.total = float(data.g_count.sum() + data.p_count.sum())
        self.n = np.zeros((len(data.gt_labels), len(data.pr_labels)))

    # objective pieces -------------------------------------------------
    def _f(self, g: int, p: int, count: float) -> float:
        if count <= 0:
            return 0.0
        return count * count / (self.d.g_count[g] + self.d.p_count[p] - count)

    def _delta(self, t: int, old: Iterable[tuple[int, int]], new: Iterable[tuple[int, int]]) -> tuple[float, int]:
        """Change of (assoc_sum, tp) when frame t's pairs ``old`` become ``new``."""
        gi, pi = self.d.g_idx[t], self.d.p_idx[t]
        change: dict[tuple[int, int], int] = {}
        for a, b in old:
            key = (int(gi[a]), int(pi[b]))
            change[key] = change.get(key, 0) - 1
        for a, b in new:
            key = (int(gi[a]), int(pi[b]))
            change[key] = change.get(key, 0) + 1
        d_assoc = 0.0
        for (g, p), dc in change.items():
            if dc:
                cur = self.n[g, p]
                d_assoc += self._f(g, p, cur + dc) - self._f(g, p, cur)
        d_tp = sum(1 for _ in new) - sum(1 for _ in old)
        return d_assoc, d_tp

    def _apply(self, t: int, pairs: Iterable[tuple[int, int]], sign: int):
        gi, pi = self.d.g_idx[t], self.d.p_idx[t]
        for a, b in pairs:
            self.n[gi[a], pi[b]] += sign

    # phases -------------------------------------------------------------
    def start(self, kind: str) -> list[list[tuple[int, int]]]:
        """Starting matching: "potential" (global alignment score, IoU tie-break),
        "iou" (largest summed IoU per frame) or "empty"."""
        self.n[:] = 0
        if kind == "empty":
            return [[] for _ in self.gated]
        score = None
        if kind == "potential":
            pot = np.zeros_like(self.n)
            for t, gate in enumerate(self.gated):
                a, b = np.nonzero(gate)
                np.add.at(pot, (self.d.g_idx[t][a], self.d.p_idx[t][b]), 1.0)
            denom = self.d.g_count[:, None] + self.d.p_count[None, :] - pot
            score = np.where(pot > 0, pot / np.where(denom > 0, denom, 1.0), 0.0)
        matches = []
        for t, gate in enumerate(self.gated):
            if not gate.any():
                matches.append([])
                continue
            s = self.d.ious[t]
            if score is not None:
                s = score[np.ix_(self.d.g_idx[t], self.d.p_idx[t])] + _TIE * s
            pairs = match_weights(np.where(gate, s, 0.0))
            matches.append(pairs)
            self._apply(t, pairs, +1)
        return matches

    def _blocks(self, t: int) -> list[list[tuple[int, int]]]:
        """Edges of frame t grouped into connected components."""
        gate = self.gated[t]
        edges = [(int(a), int(b)) for a, b in zip(*np.nonzero(gate))]
        parent: dict[tuple[str, int], tuple[str, int]] = {}

        def find(x):
            while parent.setdefault(x, x) != x:
                x = parent[x]
            return x

        for a, b in edges:
            ra, rb = find(("g", a)), find(("p", b))
            if ra != rb:
                parent[ra] = rb
        groups: dict[tuple[str, int], list[tuple[int, int]]] = {}
        for a, b in edges:
            groups.setdefault(find(("g", a)), []).append((a, b))
        return list(groups.values())

    @staticmethod
    def _matchings(edges: list[tuple[int, int]]):
        """Every matching (including the empty one) inside an edge list."""
        out = [[]]

        def rec(k, used_g, used_p, chosen):
            for j in range(k, len(edges)):
                a, b = edges[j]
                if a in used_g or b in used_p:
                    continue
                nxt = chosen + [edges[j]]
                out.append(nxt)
                rec(j + 1, used_g | {a}, used_p | {b}, nxt)

        rec(0, frozenset(), frozenset(), [])
        return out

    def _candidates(self, t: int, edges: list[tuple[int, int]], current: list[tuple[int, int]]):
        if len(edges) <= _MAX_ENUM_EDGES:
            return self._matchings(edges)
        # large block: linearised marginal gains, plus the empty matching
        gi, pi = self.d.g_idx[t], self.d.p_idx[t]
        rows = sorted({a for a, _ in edges})
        cols = sorted({b for _, b in edges})
        w = np.zeros((len(rows), len(cols)))
        base = self.n.copy()
        for a, b in current:
            base[gi[a], pi[b]] -= 1
        for a, b in edges:
            g, p = int(gi[a]), int(pi[b])
            gain = self._f(g, p, base[g, p] + 1) - self._f(g, p, base[g, p])
            w[rows.index(a), cols.index(b)] = gain + _TIE
        lin = [(rows[x], cols[y]) for x, y in match_weights(w)]
        return [[], lin]

    def _identity_move(self, matches, by_gt: bool, idents: tuple[int, ...], assoc: float, tp: int):
        """Jointly re-choose the partners of one or two same-side identities
        over all their frames.

        Everything else stays fixed, so the objective only depends on how many
        times each (identity, partner) pair is picked; a DP over those count
        vectors finds the best choice. Returns the improved (assoc, tp) or None.
        """
        own_idx = self.d.g_idx if by_gt else self.d.p_idx
        other_idx = self.d.p_idx if by_gt else self.d.g_idx
        frames = sorted(set().union(*(self.frames_of[by_gt][i] for i in idents)))
        slots = []  # (frame, current pairs, options), pairs as (own local, other local)
        keys: dict[tuple[int, int], int] = {}
        for t in frames:
            gate = self.gated[t] if by_gt else self.gated[t].T
            local = [(i, int(np.flatnonzero(own_idx[t] == i)[0])) for i in idents if i in own_idx[t]]
            own_set = {o for _, o in local}
            oriented = [(a, b) if by_gt else (b, a) for a, b in matches[t]]
            taken = {b for a, b in oriented if a not in own_set}
            current = [(a, b) for a, b in oriented if a in own_set]
            choices = [[-1] + [o for o in np.flatnonzero(gate[own]).tolist() if o not in taken] for _, own in local]
            opts = []
            for combo in product(*choices):
                used = [o for o in combo if o >= 0]
                if len(used) == len(set(used)):
                    opts.append([(own, o) for (_, own), o in zip(local, combo) if o >= 0])
            for (i, own), ch in zip(local, choices):
                for o in ch:
                    if o >= 0:
                        key = (i, int(other_idx[t][o]))
                        keys[key] = keys.get(key, 0) + 1
            slots.append((t, current, opts))
        if len(keys) < 2:
            return None
        # each count vector entry ranges over 0..frames offering that pair
        bound = 1
        for c in keys.values():
            bound *= c + 1
            if bound > self.max_states:
                return None
        klist = sorted(keys)
        pos = {k: j for j, k in enumerate(klist)}

        def f(i, q, c):
            return self._f(i, q, c) if by_gt else self._f(q, i, c)

        assoc_base, tp_base = assoc, tp
        for i in idents:
            row = self.n[i] if by_gt else self.n[:, i]
            assoc_base -= sum(f(i, q, row[q]) for q in np.flatnonzero(row))
            tp_base -= int(row.sum())

        layers = []
        zero = tuple([0] * len(klist))
        states: dict[tuple[int, ...], tuple] = {zero: None}
        for t, _, opts in slots:
            owner = {int(np.flatnonzero(own_idx[t] == i)[0]): i for i in idents if i in own_idx[t]}
            steps = []
            for opt in opts:
                delta = [0] * len(klist)
                for own, o in opt:
                    delta[pos[(owner[own], int(other_idx[t][o]))]] += 1
                steps.append((opt, delta))
            nxt: dict[tuple[int, ...], tuple] = {}
            for st in states:
                for k, (opt, delta) in enumerate(steps):
                    new = tuple(x + y for x, y in zip(st, delta))
                    nxt.setdefault(new, (st, k))
            layers.append((nxt, steps))
            states = nxt

        def value(st):
            a_new = assoc_base + sum(f(i, q, c) for (i, q), c in zip(klist, st) if c)
            return a_new, tp_base + sum(st)

        best_state, best_val = None, assoc / (self.total - tp)
        for st in states:
            a_new, tp_new = value(st)
            val = a_new / (self.total - tp_new)
            if val > best_val + 1e-15:
                best_state, best_val = st, val
        if best_state is None:
            return None

        picks = []
        st = best_state
        for nxt, steps in reversed(layers):
            prev, k = nxt[st]
            picks.append(steps[k][0])
            st = prev
        picks.reverse()
        for (t, current, _), opt in zip(slots, picks):
            if sorted(opt) == sorted(current):
                continue
            old = [(a, b) if by_gt else (b, a) for a, b in current]
            new = [(a, b) if by_gt else (b, a) for a, b in opt]
            self._apply(t, old, -1)
            self._apply(t, new, +1)
            matches[t] = [e for e in matches[t] if e not in old] + new
        return value(best_state)

    def _move_groups(self, by_gt: bool) -> list[tuple[int, ...]]:
        """Single identities plus pairs that compete for a common partner.

        On large problems groups whose state space cannot fit the cap even
        before conflicts are removed are dropped up front.
        """
        partners: dict[int, dict[int, int]] = {}
        for t, gate in enumerate(self.gated):
            for a, b in zip(*np.nonzero(gate)):
                own, other = (self.d.g_idx[t][a], self.d.p_idx[t][b]) if by_gt else (self.d.p_idx[t][b], self.d.g_idx[t][a])
                row = partners.setdefault(int(own), {})
                row[int(other)] = row.get(int(other), 0) + 1

        def fits(*ids):
            if self.full:
                return True
            bound = 1
            for i in ids:
                for c in partners[i].values():
                    bound *= c + 1
                    if bound > self.max_states:
                        return False
            return True

        ids = sorted(partners)
        groups: list[tuple[int, ...]] = [(i,) for i in ids if fits(i)]
        for x, y in combinations(ids, 2):
            if partners[x].keys() & partners[y].keys() and fits(x, y):
                groups.append((x, y))
        return groups

    def _block_sweep(self, matches, blocks, assoc: float, tp: int):
        improved = False
        for t in range(len(matches)):
            for edges in blocks[t]:
                eset = set(edges)
                current = [e for e in matches[t] if e in eset]
                if len(edges) == 1 and current:
                    continue
                best, best_val = None, assoc / (self.total - tp)
                for cand in self._candidates(t, edges, current):
                    da, dt = self._delta(t, current, cand)
                    val = (assoc + da) / (self.total - tp - dt)
                    if val > best_val + 1e-15:
                        best, best_val = (cand, da, dt), val
                if best is not None:
                    cand, da, dt = best
                    self._apply(t, current, -1)
                    self._apply(t, cand, +1)
                    matches[t] = [e for e in matches[t] if e not in eset] + list(cand)
                    assoc += da
                    tp += dt
                    improved = True
        return assoc, tp, improved

    def refine(self, matches: list[list[tuple[int, int]]]):
        assoc = float(sum(self._f(g, p, c) for (g, p), c in np.ndenumerate(self.n) if c > 0))
        tp = sum(len(m) for m in matches)
        blocks = [self._blocks(t) for t in range(len(matches))]
        self.frames_of = {True: {}, False: {}}
        for t in range(len(matches)):
            for g in self.d.g_idx[t][self.gated[t].any(axis=1)]:
                self.frames_of[True].setdefault(int(g), []).append(t)
            for p in self.d.p_idx[t][self.gated[t].any(axis=0)]:
                self.frames_of[False].setdefault(int(p), []).append(t)
        self._groups = {by_gt: self._move_groups(by_gt) for by_gt in (True, False)}
        for _ in range(_MAX_SWEEPS):
            assoc, tp, improved = self._block_sweep(matches, blocks, assoc, tp)
            for by_gt in (True, False):
                for group in self._groups[by_gt]:
                    res = self._identity_move(matches, by_gt, group, assoc, tp)
                    if res is not None:
                        assoc, tp = res
                        improved = True
            if not improved:
                break
        return matches


def _match_indices(data: _Prepared, alpha: float) -> tuple[list[list[tuple[int, int]]], np.ndarray]:
    """Best local optimum over the starting points; earlier starts win ties."""
    m = _AlphaMatcher(data, alpha)
    best = None
    for kind in _STARTS if m.full else _STARTS[:1]:
        matches = m.refine(m.start(kind))
        val = hota_from_counts(m.n, data.g_count, data.p_count)[4]
        if best is None or val > best[0] + 1e-15:
            best = (val, matches, m.n.copy())
    return best[1], best[2]


def _check_alpha(alpha: float):
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")


def filter_visible(gt: Iterable[LabeledBox], min_visibility: float | None) -> list[LabeledBox]:
    """Drop ground truth that is not more than ``min_visibility`` visible."""
    if min_visibility is None:
        return list(gt)
    return [b for b in gt if b.visibility > min_visibility]


def match_alpha(pred: Sequence[LabeledBox], gt: Sequence[LabeledBox], alpha: float) -> MatchSet:
    _check_alpha(alpha)
    data = _Prepared(pred, gt)
    matches, _ = _match_indices(data, alpha)
    tp, fn, fp = [], [], []
    for t, pairs in enumerate(matches):
        g_used = {a for a, _ in pairs}
        p_used = {b for _, b in pairs}
        for a, b in sorted(pairs):
            tp.append((data.pred[data.p_rows[t][b]], data.gt[data.g_rows[t][a]]))
        fn += [data.gt[k] for a, k in enumerate(data.g_rows[t]) if a not in g_used]
        fp += [data.pred[k] for b, k in enumerate(data.p_rows[t]) if b not in p_used]
    return MatchSet(alpha, tp, fn, fp)


def mota(pred: Sequence[LabeledBox], gt: Sequence[LabeledBox], iou_threshold: float = 0.5) -> float:
    errors, n_gt = _clear_counts(_Prepared(pred, gt), iou_threshold)
    if n_gt == 0:
        raise EmptyGroundTruth("MOTA is undefined without ground-truth boxes")
    return 1.0 - errors / n_gt


def _clear_counts(data: _Prepared, thr: float) -> tuple[int, int]:
    """CLEAR MOT misses + false positives + identity switches, and the gt box count.

    Correspondences from the previous frame are kept while they still pass
    the IoU gate; the rest is matched by maximum IoU.
    """
    last_match: dict[int, int] = {}
    errors = 0
    for t in range(len(data.frames)):
        iou = data.ious[t]
        gi, pi = data.g_idx[t], data.p_idx[t]
        ok = iou >= thr - GATE_EPS
        pairs = []
        free_g = np.ones(len(gi), bool)
        free_p = np.ones(len(pi), bool)
        p_pos = {int(p): b for b, p in enumerate(pi)}
        for a, g in enumerate(gi):
            prev = last_match.get(int(g))
            b = p_pos.get(prev) if prev is not None else None
            if b is not None and free_p[b] and ok[a, b]:
                pairs.append((a, b))
                free_g[a] = free_p[b] = False
        w = np.where(ok & free_g[:, None] & free_p[None, :], iou, 0.0)
        pairs += match_weights(w)
        for a, b in pairs:
            g, p = int(gi[a]), int(pi[b])
            if g in last_match and last_match[g] != p:
                errors += 1
            last_match[g] = p
        errors += (len(gi) - len(pairs)) + (len(pi) - len(pairs))
    return errors, data.n_gt


def countable_ids(gt: Iterable[LabeledBox], min_run: int = 1) -> set[int]:
    """Ids present in at least ``min_run`` consecutive frames somewhere."""
    frames: dict[int, list[int]] = {}
    for b in gt:
        frames.setdefault(b.track_id, []).append(b.frame)
    out = set()
    for tid, fs in frames.items():
        fs = sorted(set(fs))
        run = best = 1
        for a, b in zip(fs, fs[1:]):
            run = run + 1 if b == a + 1 else 1
            best = max(best, run)
        if best >= min_run:
            out.add(tid)
    return out


def hota(
    pred: Sequence[LabeledBox],
    gt: Sequence[LabeledBox],
    min_visibility: float | None = 0.5,
    mota_iou: float = 0.5,
    gt_count: int | None = None,
) -> HotaReport:
    """HOTA, DetA and AssA over the 19 alpha gates, plus MOTA and counts.

    The counting columns compare the number of predicted ids with
    ``gt_count``, by default the number of ground-truth ids left after the
    visibility filter.
    """
    gt = filter_visible(gt, min_visibility)
    if not gt:
        raise EmptyGroundTruth("no ground-truth boxes left to score against")
    data = _Prepared(pred, gt)
    k = len(ALPHAS)
    tp, assoc = np.zeros(k), np.zeros(k)
    for i, alpha in enumerate(ALPHAS):
        _, n = _match_indices(data, float(alpha))
        tp[i], assoc[i], *_ = hota_from_counts(n, data.g_count, data.p_count)
    mota_errors, n_gt = _clear_counts(data, mota_iou)
    return _report(tp, data.n_gt - tp, data.n_pred - tp, assoc, mota_errors, n_gt,
                   len(data.pr_labels), len(data.gt_labels) if gt_count is None else gt_count)


def _report(tp, fn, fp, assoc, mota_errors, n_gt, cbyt, cbyt_gt) -> HotaReport:
    tp, fn, fp, assoc = (np.asarray(x, dtype=float) for x in (tp, fn, fp, assoc))
    with np.errstate(divide="ignore", invalid="ignore"):
        det = np.where(tp > 0, tp / (tp + fn + fp), 0.0)
        ass = np.where(tp > 0, assoc / np.where(tp > 0, tp, 1.0), 0.0)
    hot = np.sqrt(det * ass)
    return HotaReport(
        hota=float(hot.mean()),
        deta=float(det.mean()),
        assa=float(ass.mean()),
        hota_alpha=hot,
        deta_alpha=det,
        assa_alpha=ass,
        mota=1.0 - mota_errors / n_gt,
        cbyt=int(cbyt),
        cbyt_gt=int(cbyt_gt),
        rel_error=counting_error(cbyt, cbyt_gt) if cbyt_gt > 0 else float("nan"),
        tp=tp,
        fn=fn,
        fp=fp,
        assoc=assoc,
        mota_errors=int(mota_errors),
        n_gt=int(n_gt),
    )


def combine_reports(reports: Sequence[HotaReport]) -> HotaReport:
    """Pool several sequences by summing their per-alpha statistics."""
    if not reports:
        raise EmptyGroundTruth("nothing to combine")
    return _report(
        sum(r.tp for r in reports),
        sum(r.fn for r in reports),
        sum(r.fp for r in reports),
        sum(r.assoc for r in reports),
        sum(r.mota_errors for r in reports),
        sum(r.n_gt for r in reports),
        sum(r.cbyt for r in reports),
        sum(r.cbyt_gt for r in reports),
    )


__all__ = [
    "ALPHAS",
    "EmptyGroundTruth",
    "HotaReport",
    "InvalidAlpha",
    "LabeledBox",
    "MatchSet",
    "ZeroGroundTruth",
    "combine_reports",
    "countable_ids",
    "counting_error",
    "filter_visible",
    "hota",
    "hota_from_counts",
    "match_alpha",
    "mota",
]
