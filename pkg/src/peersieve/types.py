"""Shared domain types for perception outputs and verdicts.

Detection outputs are flat sets of axis-aligned 2D boxes in world meters
(bird's-eye view), each carrying a per-class posterior vector.  Posteriors
live in [0, 1] per class and do not need to sum to one.  Segmentation
outputs are dense per-pixel class-probability grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (distinct from bad call inputs)."""


class Verdict(str, Enum):
    """Group test outcome: a set is either clean or contains a defective."""

    BENIGN = "benign"
    CONTAM = "contam"


@dataclass(frozen=True)
class BoxProposal:
    """One axis-aligned box with class posteriors.

    Corners are (x_min, y_min, x_max, y_max) in meters with x_min < x_max
    and y_min < y_max.  posteriors[c] is the confidence that the box is an
    instance of class c.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    posteriors: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box: ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )
        if len(self.posteriors) == 0:
            raise ValueError("box needs at least one class posterior")
        for p in self.posteriors:
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"posterior {p} outside [0, 1]")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def argmax_class(self) -> int:
        """Most confident class; ties break toward the lowest class id."""
        best = 0
        for c in range(1, len(self.posteriors)):
            if self.posteriors[c] > self.posteriors[best]:
                best = c
        return best


@dataclass(frozen=True)
class DetectionSet:
    """A detection output: zero or more box proposals with a shared class count."""

    boxes: tuple[BoxProposal, ...] = ()

    def __post_init__(self) -> None:
        counts = {len(b.posteriors) for b in self.boxes}
        if len(counts) > 1:
            raise ValueError(f"boxes disagree on class count: {sorted(counts)}")

    def class_count(self) -> int | None:
        """Number of classes, or None for an empty set."""
        if not self.boxes:
            return None
        return len(self.boxes[0].posteriors)

    def __len__(self) -> int:
        return len(self.boxes)


@dataclass(eq=False)
class SegGrid:
    """A segmentation output: probs[x, y, c] in [0, 1], shape (W, H, C)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3:
            raise ValueError(f"expected (W, H, C) grid, got shape {self.probs.shape}")
        w, h, c = self.probs.shape
        if w < 1 or h < 1 or c < 1:
            raise ValueError(f"empty grid dimension in shape {self.probs.shape}")
        if np.any(self.probs < 0.0) or np.any(self.probs > 1.0):
            raise ValueError("grid probabilities outside [0, 1]")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.probs.shape  # type: ignore[return-value]

    def copy(self) -> "SegGrid":
        return SegGrid(self.probs.copy())


PerceptionOutput = DetectionSet | SegGrid


def same_output_kind(a: PerceptionOutput, b: PerceptionOutput) -> bool:
    return (isinstance(a, DetectionSet) and isinstance(b, DetectionSet)) or (
        isinstance(a, SegGrid) and isinstance(b, SegGrid)
    )


@dataclass(frozen=True)
class OracleVerdict:
    """Outcome of one group query.

    score is the consistency score that produced the verdict when the
    oracle computes one (synthetic oracles report the decision only and
    leave score at nan).  query_index counts queries per oracle instance,
    starting at 1.
    """

    label: Verdict
    score: float = float("nan")
    query_index: int = 0

    @property
    def is_benign(self) -> bool:
        return self.label is Verdict.BENIGN
