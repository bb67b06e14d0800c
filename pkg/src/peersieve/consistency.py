"""Collaborative consistency scoring for detection and segmentation outputs.

The detection score matches the boxes of one output against another with a
minimum-cost assignment per class and converts the mean matching cost into
a consensus score in [0, 1]: 1 means every box is perfectly accounted for,
0 means nothing matches.  The segmentation score is a class-frequency
weighted soft overlap of two probability grids, symmetric by construction.

High score = consistent.  Decision layers classify a score Z as benign
when Z >= epsilon (see the threshold module).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .types import BoxProposal, ConfigError, DetectionSet, SegGrid

# Assignment target meaning "matched to no real box".
DUMMY = -1


@dataclass(frozen=True)
class CCLossParams:
    """Scoring parameters.

    phi weighs the geometric (IoU) term against the posterior-drop term in
    the per-box loss.  Class membership is always by argmax posterior with
    ties toward the lowest class id.  seg_epsilon guards the inverse
    class-mass weights of the segmentation score against division by zero.
    symmetric_det averages the detection score over both matching
    directions instead of the default one-sided evaluation.
    """

    phi: float = 1.0
    seg_epsilon: float = 1e-6
    symmetric_det: bool = False

    def __post_init__(self) -> None:
        if self.phi < 0.0:
            raise ValueError(f"phi must be >= 0, got {self.phi}")
        if self.seg_epsilon <= 0.0:
            raise ValueError(f"seg_epsilon must be > 0, got {self.seg_epsilon}")


@dataclass(frozen=True)
class MatchResult:
    """Minimum-cost assignment: row index -> column index or DUMMY."""

    assignment: dict[int, int]
    total_cost: float


def iou(box_a, box_b) -> float:
    """Intersection over union of two axis-aligned boxes.

    Accepts BoxProposal or any (x_min, y_min, x_max, y_max) sequence.
    Returns 1.0 only for identical rectangles and 0.0 when the interiors
    are disjoint (shared edges count as disjoint).
    """
    ax0, ay0, ax1, ay1 = box_a.corners if isinstance(box_a, BoxProposal) else box_a
    bx0, by0, bx1, by1 = box_b.corners if isinstance(box_b, BoxProposal) else box_b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def box_loss(y: BoxProposal, y_prime: BoxProposal | None, c: int, phi: float) -> float:
    """Per-box matching cost for class c, in [0, 1].

    Cost of pairing box y with candidate y_prime:

        (max(p_c - p'_c, 0) + phi * (1 - IoU(y, y'))) / (1 + phi)

    A None candidate means "matched to nothing"; the cost keeps the same
    normalization so it stays comparable and bounded:

        (p_c + phi) / (1 + phi)

    Zero exactly when y_prime is y's equal in position and class score.
    """
    p_c = y.posteriors[c]
    if y_prime is None:
        return (p_c + phi) / (1.0 + phi)
    drop = p_c - y_prime.posteriors[c]
    if drop < 0.0:
        drop = 0.0
    return (drop + phi * (1.0 - iou(y, y_prime))) / (1.0 + phi)


def assign_min_cost(costs: np.ndarray, n_real_cols: int | None = None) -> MatchResult:
    """Globally minimal injective row-to-column assignment.

    Arguments:
        costs: (R, K) matrix of non-negative costs with R <= K; every row
            is assigned to a distinct column.
        n_real_cols: if given, columns >= n_real_cols are padding and show
            up as DUMMY in the returned assignment.

    Returns:
        MatchResult with the optimal assignment and its total cost.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {costs.shape}")
    rows, cols = costs.shape
    if rows > cols:
        raise ValueError(f"need at least as many columns as rows, got {rows}x{cols}")
    if np.any(costs < 0.0) or not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite and non-negative")
    real = cols if n_real_cols is None else n_real_cols
    row_ind, col_ind = linear_sum_assignment(costs)
    total = float(costs[row_ind, col_ind].sum())
    assignment = {
        int(r): (int(c) if c < real else DUMMY) for r, c in zip(row_ind, col_ind)
    }
    return MatchResult(assignment=assignment, total_cost=total)


def _boxes_by_class(det: DetectionSet) -> dict[int, list[BoxProposal]]:
    grouped: dict[int, list[BoxProposal]] = {}
    for box in det.boxes:
        grouped.setdefault(box.argmax_class(), []).append(box)
    return grouped


def _one_sided_det(src: DetectionSet, dst: DetectionSet, phi: float) -> float:
    """Score src against dst: mean per-class optimal matching cost, inverted.

    Every src box must find a counterpart among dst boxes of the same
    (argmax) class or pay the unmatched cost.  dst boxes of classes src
    does not propose are ignored; an empty src is vacuously consistent.
    """
    src_classes = _boxes_by_class(src)
    if not src_classes:
        return 1.0
    dst_classes = _boxes_by_class(dst)
    class_costs = []
    for c in sorted(src_classes):
        rows = src_classes[c]
        cands = dst_classes.get(c, [])
        n_rows, n_cands = len(rows), len(cands)
        costs = np.empty((n_rows, n_cands + n_rows), dtype=np.float64)
        for i, y in enumerate(rows):
            for j, y_prime in enumerate(cands):
                costs[i, j] = box_loss(y, y_prime, c, phi)
            costs[i, n_cands:] = box_loss(y, None, c, phi)
        match = assign_min_cost(costs, n_real_cols=n_cands)
        class_costs.append(match.total_cost / n_rows)
    return 1.0 - sum(class_costs) / len(class_costs)


def ccloss_det(ego: DetectionSet, fused: DetectionSet, params: CCLossParams) -> float:
    """Detection consistency score in [0, 1].

    One-sided by default: ego boxes are matched into the fused set, so
    fused boxes with no ego counterpart carry no penalty.  The score is
    deliberately asymmetric; with params.symmetric_det both directions are
    averaged.  Identical inputs score exactly 1.0.
    """
    ca, cb = ego.class_count(), fused.class_count()
    if ca is not None and cb is not None and ca != cb:
        raise ConfigError(f"class count mismatch: {ca} vs {cb}")
    score = _one_sided_det(ego, fused, params.phi)
    if params.symmetric_det:
        score = 0.5 * (score + _one_sided_det(fused, ego, params.phi))
    return score


def ccloss_seg(a: SegGrid, b: SegGrid, params: CCLossParams) -> float:
    """Segmentation consistency score in [0, 1], symmetric bit-exactly.

    Soft overlap of two probability grids with inverse-squared class-mass
    weights, doubled so identical binary grids score exactly 1:

        2 * sum_j w_j * sum_i p_ij * q_ij
        ---------------------------------,   w_j = 1 / (mass_j + eps)^2
        sum_j w_j * (sum_i p_ij + sum_i q_ij)

    where mass_j is the total probability both grids assign to class j.
    Rare classes are up-weighted; classes absent from both grids drop out.
    Two all-zero grids agree vacuously and score 1.0.
    """
    if a.shape != b.shape:
        raise ConfigError(f"grid shape mismatch: {a.shape} vs {b.shape}")
    n_classes = a.shape[2]
    pa = a.probs.reshape(-1, n_classes)
    pb = b.probs.reshape(-1, n_classes)
    mass_a = pa.sum(axis=0)
    mass_b = pb.sum(axis=0)
    overlap = (pa * pb).sum(axis=0)
    mass = mass_a + mass_b
    weights = 1.0 / (mass + params.seg_epsilon) ** 2
    denom = float(np.dot(weights, mass))
    if denom == 0.0:
        return 1.0
    score = 2.0 * float(np.dot(weights, overlap)) / denom
    if score < 0.0:
        return 0.0
    if score > 1.0:
        return 1.0
    return score
