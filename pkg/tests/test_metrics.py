import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exhaustive_hota, exhaustive_hota_alpha, micro_instances
from orchardtrack.geometry import BoundingBox
from orchardtrack.metrics import (
    ALPHAS,
    EmptyGroundTruth,
    InvalidAlpha,
    LabeledBox,
    ZeroGroundTruth,
    _AlphaMatcher,
    _match_indices,
    _Prepared,
    combine_reports,
    countable_ids,
    counting_error,
    filter_visible,
    hota,
    hota_from_counts,
    match_alpha,
    mota,
)


def straight_track(tid, frames, x0=0.0, dx=5.0, size=10.0, y=0.0):
    return [LabeledBox(f, tid, BoundingBox(x0 + dx * f, y, size, size)) for f in frames]


def relabel(boxes, mapping):
    return [LabeledBox(b.frame, mapping(b), b.box, b.visibility) for b in boxes]


def test_identical_prediction_matches_everything():
    gt = straight_track(1, range(1, 8)) + straight_track(2, range(3, 9), y=50)
    for alpha in (0.05, 0.5, 0.95):
        ms = match_alpha(gt, gt, alpha)
        assert len(ms.tp) == len(gt) and not ms.fn and not ms.fp
    rep = hota(gt, gt)
    assert rep.hota == rep.deta == rep.assa == rep.mota == 1.0


def test_no_predictions():
    gt = straight_track(1, range(1, 6))
    ms = match_alpha([], gt, 0.5)
    assert len(ms.fn) == 5 and not ms.tp
    rep = hota([], gt)
    assert rep.hota == 0 and rep.mota == 0
    assert mota([], gt) == 0


def test_pure_false_positives():
    gt = straight_track(1, range(1, 5))
    pred = straight_track(7, range(1, 5), y=500) + straight_track(8, range(1, 5), y=900)
    # 4 misses and 8 false positives over 4 gt boxes
    assert mota(pred, gt) == pytest.approx(1 - 12 / 4)


def test_identity_switch_counted_once():
    gt = straight_track(1, range(1, 7))
    pred = relabel(gt, lambda b: 1 if b.frame <= 3 else 2)
    assert mota(pred, gt) == pytest.approx(1 - 1 / 6)


def test_split_track_by_hand():
    gt = straight_track(1, range(1, 11))
    pred = relabel(gt, lambda b: 1 if b.frame <= 5 else 2)
    rep = hota(pred, gt)
    np.testing.assert_allclose(rep.deta_alpha, 1.0)
    np.testing.assert_allclose(rep.assa_alpha, 0.5)
    np.testing.assert_allclose(rep.hota_alpha, math.sqrt(0.5))


def test_crossing_id_swap_matches_exhaustive():
    # two gt tracks cross at frame 5; prediction swaps ids there
    g1 = [LabeledBox(f, 1, BoundingBox(10.0 * f, 10.0 * f, 12, 12)) for f in range(1, 10)]
    g2 = [LabeledBox(f, 2, BoundingBox(10.0 * f, 100 - 10.0 * f, 12, 12)) for f in range(1, 10)]
    gt = g1 + g2
    pred = relabel(gt, lambda b: b.track_id if b.frame < 5 else 3 - b.track_id)
    pred = [LabeledBox(b.frame, b.track_id, b.box.translated(1.5, -1.0)) for b in pred]
    rep = hota(pred, gt)
    assert rep.hota == pytest.approx(exhaustive_hota(pred, gt), abs=1e-12)


def test_empty_ground_truth_is_an_error():
    with pytest.raises(EmptyGroundTruth):
        hota(straight_track(1, range(1, 3)), [])
    with pytest.raises(EmptyGroundTruth):
        mota([], [])


def test_invalid_alpha():
    with pytest.raises(InvalidAlpha):
        match_alpha([], straight_track(1, [1]), 1.0)


def test_counting_error_examples():
    assert counting_error(1183, 1198) == pytest.approx(0.0125, abs=5e-5)
    assert counting_error(100, 100) == 0
    assert counting_error(50, 200) == 0.75
    with pytest.raises(ZeroGroundTruth):
        counting_error(1, 0)


def test_visibility_filter():
    gt = [
        LabeledBox(1, 1, BoundingBox(0, 0, 5, 5), visibility=0.5),
        LabeledBox(1, 2, BoundingBox(9, 9, 5, 5), visibility=0.51),
    ]
    assert [b.track_id for b in filter_visible(gt, 0.5)] == [2]
    assert filter_visible(gt, None) == gt
    rep = hota(gt[1:], gt)
    assert rep.hota == 1.0 and rep.cbyt_gt == 1


def test_counting_columns():
    gt = straight_track(1, range(1, 6)) + straight_track(2, range(1, 6), y=80)
    pred = straight_track(5, range(1, 6))
    rep = hota(pred, gt)
    assert (rep.cbyt, rep.cbyt_gt, rep.rel_error) == (1, 2, 0.5)
    assert hota(pred, gt, gt_count=4).rel_error == 0.75


def test_countable_ids():
    gt = straight_track(1, [1, 2, 3, 5, 6]) + straight_track(2, range(1, 7))
    assert countable_ids(gt, 1) == {1, 2}
    assert countable_ids(gt, 4) == {2}
    assert countable_ids(gt, 7) == set()


def test_combine_reports_pools_statistics():
    gt_a = straight_track(1, range(1, 11))
    gt_b = straight_track(1, range(1, 5))
    ra = hota(relabel(gt_a, lambda b: 1 if b.frame <= 5 else 2), gt_a)
    rb = hota(gt_b, gt_b)
    both = combine_reports([ra, rb])
    np.testing.assert_allclose(both.tp, ra.tp + rb.tp)
    assert both.cbyt == 3 and both.cbyt_gt == 2
    assert ra.hota < both.hota < 1
    with pytest.raises(EmptyGroundTruth):
        combine_reports([])


def test_hota_from_counts_identity():
    n = np.array([[5.0, 0.0], [0.0, 5.0]])
    tp, assoc, det, ass, h = hota_from_counts(n, np.array([5.0, 5.0]), np.array([5.0, 5.0]))
    assert (tp, assoc, det, ass, h) == (10.0, 10.0, 1.0, 1.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_micro_instances_match_exhaustive(seed):
    pred, gt = next(micro_instances(1, seed))
    rep = hota(pred, gt, min_visibility=None)
    for i in (0, 9, 18):
        h, d, a = exhaustive_hota_alpha(pred, gt, float(ALPHAS[i]))
        assert rep.hota_alpha[i] == pytest.approx(h, abs=1e-9)
    np.testing.assert_allclose(rep.hota_alpha, np.sqrt(rep.deta_alpha * rep.assa_alpha), rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_partition_and_monotone_in_alpha(seed):
    pred, gt = next(micro_instances(1, seed))
    rep = hota(pred, gt, min_visibility=None)
    np.testing.assert_array_equal(rep.tp + rep.fn, len(gt))
    np.testing.assert_array_equal(rep.tp + rep.fp, len(pred))
    assert np.all(np.diff(rep.hota_alpha) <= 1e-12)
    ms = match_alpha(pred, gt, 0.5)
    assert len(ms.tp) + len(ms.fn) == len(gt)
    assert len(ms.tp) + len(ms.fp) == len(pred)
    # at most one partner per box
    assert len({id(p) for p, _ in ms.tp}) == len({id(g) for _, g in ms.tp}) == len(ms.tp)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 20.0))
def test_scale_invariance(seed, k):
    pred, gt = next(micro_instances(1, seed))

    def scale(boxes):
        return [LabeledBox(b.frame, b.track_id, BoundingBox(*(k * v for v in b.box.as_tuple()))) for b in boxes]

    a = hota(pred, gt, min_visibility=None)
    b = hota(scale(pred), scale(gt), min_visibility=None)
    np.testing.assert_allclose(a.hota_alpha, b.hota_alpha, atol=1e-9)
    assert a.mota == pytest.approx(b.mota)


def test_large_problem_not_worse_than_two_pass(small_scene):
    rng = np.random.default_rng(5)
    gt = [b for b in small_scene.gt_boxes if b.visibility > 0.5]
    pred = []
    for b in gt:
        if rng.random() < 0.1:
            continue
        tid = b.track_id + 1000 * int(rng.random() < 0.15)
        jit = rng.normal(0, 1.5, 2)
        pred.append(LabeledBox(b.frame, tid, b.box.translated(*jit)))
    data = _Prepared(pred, gt)
    for alpha in (0.3, 0.7):
        two_pass = _AlphaMatcher(data, alpha)
        two_pass.start("potential")
        assert not two_pass.full
        base = hota_from_counts(two_pass.n, data.g_count, data.p_count)[4]
        _, n = _match_indices(data, alpha)
        assert hota_from_counts(n, data.g_count, data.p_count)[4] >= base - 1e-12
