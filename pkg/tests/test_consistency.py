"""Consistency scoring tests.

Expected values are derived independently: assignment optima by exhaustive
permutation enumeration, IoU and loss values by hand geometry.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peersieve.consistency import (
    DUMMY,
    CCLossParams,
    assign_min_cost,
    box_loss,
    ccloss_det,
    ccloss_seg,
    iou,
)
from peersieve.rng import make_rng
from peersieve.types import BoxProposal, ConfigError, DetectionSet, SegGrid

P = CCLossParams()


def brute_force_assignment(costs: np.ndarray) -> tuple[float, dict[int, int]]:
    """Exhaustive minimum over all injective row-to-column maps."""
    rows, cols = costs.shape
    best = math.inf
    best_map: dict[int, int] = {}
    for chosen in itertools.permutations(range(cols), rows):
        total = sum(costs[i, chosen[i]] for i in range(rows))
        if total < best:
            best = total
            best_map = {i: chosen[i] for i in range(rows)}
    return best, best_map


def box(x0, y0, x1, y1, posts) -> BoxProposal:
    return BoxProposal(x0, y0, x1, y1, tuple(posts))


# ---------- iou ----------


def test_iou_hand_example_one_seventh():
    assert abs(iou((0, 0, 2, 2), (1, 1, 3, 3)) - 1.0 / 7.0) < 1e-15


def test_iou_identity_and_disjoint():
    assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    assert iou((0, 0, 1, 1), (5, 5, 6, 6)) == 0.0
    # shared edge only: zero-area intersection
    assert iou((0, 0, 1, 1), (1, 0, 2, 1)) == 0.0


@given(
    st.tuples(
        st.floats(-50, 50), st.floats(-50, 50),
        st.floats(0.01, 20), st.floats(0.01, 20),
        st.floats(-50, 50), st.floats(-50, 50),
        st.floats(0.01, 20), st.floats(0.01, 20),
    )
)
def test_iou_bounds_and_symmetry(v):
    a = (v[0], v[1], v[0] + v[2], v[1] + v[3])
    b = (v[4], v[5], v[4] + v[6], v[5] + v[7])
    val = iou(a, b)
    assert 0.0 <= val <= 1.0
    assert val == iou(b, a)


# ---------- box_loss ----------


def test_box_loss_identical_is_zero():
    y = box(0, 0, 2, 2, [0.3, 0.7])
    assert box_loss(y, y, 1, 1.0) == 0.0


def test_box_loss_unmatched_confident_box():
    y = box(0, 0, 2, 2, [1.0])
    assert box_loss(y, None, 0, 1.0) == 1.0


def test_box_loss_half_overlap_equal_posterior():
    # IoU(A, B) = 2 / (4 + 2 - 2) = 0.5 exactly
    a = box(0, 0, 2, 2, [0.9])
    b = box(0, 0, 2, 1, [0.9])
    assert abs(iou(a, b) - 0.5) < 1e-15
    assert abs(box_loss(a, b, 0, 1.0) - 0.25) < 1e-15


def test_box_loss_range():
    rng = make_rng(7)
    for _ in range(500):
        c0 = rng.uniform(-10, 10, size=2)
        c1 = rng.uniform(-10, 10, size=2)
        a = box(c0[0], c0[1], c0[0] + rng.uniform(0.1, 5), c0[1] + rng.uniform(0.1, 5),
                [rng.uniform(), rng.uniform()])
        b = box(c1[0], c1[1], c1[0] + rng.uniform(0.1, 5), c1[1] + rng.uniform(0.1, 5),
                [rng.uniform(), rng.uniform()])
        phi = rng.uniform(0, 4)
        assert 0.0 <= box_loss(a, b, 1, phi) <= 1.0
        assert 0.0 <= box_loss(a, None, 1, phi) <= 1.0


# ---------- assign_min_cost ----------


def test_assign_single_cell():
    res = assign_min_cost(np.array([[0.0]]))
    assert res.assignment == {0: 0}
    assert res.total_cost == 0.0


def test_assign_two_by_two_diagonal():
    res = assign_min_cost(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert res.assignment == {0: 0, 1: 1}
    assert res.total_cost == 2.0


def test_assign_dummy_translation():
    # one real column, one padding column
    costs = np.array([[0.2, 0.9], [0.8, 0.9]])
    res = assign_min_cost(costs, n_real_cols=1)
    assert res.assignment[0] == 0
    assert res.assignment[1] == DUMMY
    assert abs(res.total_cost - 1.1) < 1e-12


def test_assign_rejects_bad_inputs():
    with pytest.raises(ValueError):
        assign_min_cost(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        assign_min_cost(np.array([[-1.0]]))
    with pytest.raises(ValueError):
        assign_min_cost(np.array([[np.nan]]))


def test_assign_matches_brute_force_random():
    rng = make_rng(123)
    for _ in range(200):
        rows = int(rng.integers(1, 6))
        cols = int(rng.integers(rows, 7))
        costs = rng.uniform(0, 10, size=(rows, cols))
        expected, _ = brute_force_assignment(costs)
        got = assign_min_cost(costs)
        assert abs(got.total_cost - expected) < 1e-9
        targets = list(got.assignment.values())
        assert len(set(targets)) == len(targets)


# ---------- ccloss_det ----------


def _fixture_pair():
    ego = DetectionSet(
        (
            box(0, 0, 2, 2, [0.9, 0.1]),
            box(5, 5, 7, 8, [0.2, 0.8]),
            box(-3, 0, -1, 1, [0.6, 0.5]),
        )
    )
    fused = DetectionSet(
        (
            box(0.1, 0, 2.1, 2, [0.8, 0.2]),
            box(5, 5.2, 7, 8.2, [0.1, 0.9]),
            box(10, 10, 11, 11, [0.9, 0.0]),
        )
    )
    return ego, fused


def test_ccloss_det_self_consistency_exact():
    ego, _ = _fixture_pair()
    assert ccloss_det(ego, ego, P) == 1.0
    assert ccloss_det(ego, ego, CCLossParams(symmetric_det=True)) == 1.0


def test_ccloss_det_empty_ego_is_vacuous():
    fused = DetectionSet((box(0, 0, 1, 1, [1.0]),))
    assert ccloss_det(DetectionSet(), fused, P) == 1.0
    assert ccloss_det(DetectionSet(), DetectionSet(), P) == 1.0


def test_ccloss_det_confident_box_against_empty():
    ego = DetectionSet((box(0, 0, 2, 2, [1.0]),))
    assert ccloss_det(ego, DetectionSet(), P) == 0.0


def test_ccloss_det_asymmetry_witness():
    ego = DetectionSet((box(0, 0, 2, 2, [1.0]),))
    fused = DetectionSet((box(0, 0, 2, 2, [1.0]), box(50, 50, 52, 52, [1.0])))
    forward = ccloss_det(ego, fused, P)
    backward = ccloss_det(fused, ego, P)
    assert forward == 1.0
    # the extra fused box has no ego counterpart: (0 + 1.0) / 2 boxes
    assert abs(backward - 0.5) < 1e-12
    assert forward != backward


def test_ccloss_det_symmetric_flag_averages():
    ego = DetectionSet((box(0, 0, 2, 2, [1.0]),))
    fused = DetectionSet((box(0, 0, 2, 2, [1.0]), box(50, 50, 52, 52, [1.0])))
    sym = ccloss_det(ego, fused, CCLossParams(symmetric_det=True))
    assert abs(sym - 0.75) < 1e-12


def test_ccloss_det_tie_breaks_to_lowest_class():
    # both classes tied at 0.5: box must land in class 0's pool
    ego = DetectionSet((box(0, 0, 2, 2, [0.5, 0.5]),))
    fused_cls0 = DetectionSet((box(0, 0, 2, 2, [0.5, 0.4]),))
    fused_cls1 = DetectionSet((box(0, 0, 2, 2, [0.4, 0.5]),))
    # same geometry, but the class-1 candidate lives in a different pool,
    # so the tied ego box matches nothing there
    assert ccloss_det(ego, fused_cls0, P) > ccloss_det(ego, fused_cls1, P)


def test_ccloss_det_class_count_mismatch_rejected():
    a = DetectionSet((box(0, 0, 1, 1, [1.0]),))
    b = DetectionSet((box(0, 0, 1, 1, [1.0, 0.0]),))
    with pytest.raises(ConfigError):
        ccloss_det(a, b, P)


def test_ccloss_det_monotone_under_growing_shift():
    ego, _ = _fixture_pair()
    scores = []
    for offset in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0]:
        shifted = DetectionSet(
            tuple(
                box(b.x_min + offset, b.y_min, b.x_max + offset, b.y_max, b.posteriors)
                for b in ego.boxes
            )
        )
        scores.append(ccloss_det(ego, shifted, P))
    assert scores[0] == 1.0
    for earlier, later in zip(scores, scores[1:]):
        assert later <= earlier + 1e-12


@st.composite
def detection_sets(draw, max_boxes=4, n_classes=3):
    n = draw(st.integers(0, max_boxes))
    boxes = []
    for _ in range(n):
        x0 = draw(st.floats(-20, 20))
        y0 = draw(st.floats(-20, 20))
        w = draw(st.floats(0.1, 8))
        h = draw(st.floats(0.1, 8))
        posts = tuple(
            draw(st.floats(0, 1)) for _ in range(n_classes)
        )
        boxes.append(BoxProposal(x0, y0, x0 + w, y0 + h, posts))
    return DetectionSet(tuple(boxes))


@settings(max_examples=150, deadline=None)
@given(detection_sets(), detection_sets(), st.floats(0, 5))
def test_ccloss_det_range(a, b, phi):
    score = ccloss_det(a, b, CCLossParams(phi=phi))
    assert 0.0 <= score <= 1.0


# ---------- ccloss_seg ----------


def test_ccloss_seg_identity_binary_exact():
    grid = np.zeros((4, 4, 2))
    grid[:2, :, 0] = 1.0
    grid[2:, :, 1] = 1.0
    assert ccloss_seg(SegGrid(grid), SegGrid(grid.copy()), P) == 1.0


def test_ccloss_seg_identity_all_ones_2x2():
    grid = np.ones((2, 2, 1))
    assert ccloss_seg(SegGrid(grid), SegGrid(grid.copy()), P) == 1.0


def test_ccloss_seg_half_overlap_two_thirds():
    # 2x1 single-class grids: p0 = [1, 1], pf = [1, 0]
    a = np.ones((2, 1, 1))
    b = np.zeros((2, 1, 1))
    b[0, 0, 0] = 1.0
    score = ccloss_seg(SegGrid(a), SegGrid(b), P)
    assert abs(score - 2.0 / 3.0) < 1e-12


def test_ccloss_seg_disjoint_support_zero():
    a = np.zeros((2, 2, 2))
    b = np.zeros((2, 2, 2))
    a[..., 0] = 1.0
    b[..., 1] = 1.0
    assert ccloss_seg(SegGrid(a), SegGrid(b), P) == 0.0


def test_ccloss_seg_ones_vs_zeros():
    a = np.ones((3, 3, 1))
    b = np.zeros((3, 3, 1))
    assert ccloss_seg(SegGrid(a), SegGrid(b), P) == 0.0


def test_ccloss_seg_both_empty_vacuous():
    z = np.zeros((3, 3, 2))
    assert ccloss_seg(SegGrid(z), SegGrid(z.copy()), P) == 1.0


def test_ccloss_seg_shape_mismatch_rejected():
    with pytest.raises(ConfigError):
        ccloss_seg(SegGrid(np.zeros((2, 2, 1))), SegGrid(np.zeros((2, 3, 1))), P)


def test_ccloss_seg_symmetric_bit_exact_random():
    rng = make_rng(99)
    for _ in range(200):
        shape = (int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(1, 4)))
        a = SegGrid(rng.uniform(0, 1, size=shape))
        b = SegGrid(rng.uniform(0, 1, size=shape))
        assert ccloss_seg(a, b, P) == ccloss_seg(b, a, P)


def test_ccloss_seg_range_random():
    rng = make_rng(100)
    for _ in range(500):
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 4)))
        a = SegGrid(rng.uniform(0, 1, size=shape))
        b = SegGrid(rng.uniform(0, 1, size=shape))
        assert 0.0 <= ccloss_seg(a, b, P) <= 1.0


def test_params_validation():
    with pytest.raises(ValueError):
        CCLossParams(phi=-0.1)
    with pytest.raises(ValueError):
        CCLossParams(seg_epsilon=0.0)
