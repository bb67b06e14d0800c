"""Online threshold adaptation from two labeled score windows.

Scores the oracle labeled benign feed one FIFO window, contaminated scores the
other. Once both windows have seen enough data, the working threshold chases
the midpoint between the benign lower tail and the contaminated upper tail
under EWMA smoothing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .types import ConfigError, Verdict


@dataclass(frozen=True)
class ThresholdParams:
    alpha: float = 0.05
    beta: float = 0.05
    window: int = 100
    window_min: int = 10
    eta: float = 0.1

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ConfigError("alpha and beta must lie in (0, 1)")
        if not 1 <= self.window_min <= self.window:
            raise ConfigError(
                f"need 1 <= window_min <= window, got {self.window_min}/{self.window}")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")


def empirical_quantile(window: Sequence[float], q: float) -> float:
    """Smallest window element whose empirical CDF reaches q; q in (0, 1]."""
    if len(window) == 0:
        raise ValueError("quantile of an empty window")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    ordered = sorted(window)
    n = len(ordered)
    for i, z in enumerate(ordered):
        if (i + 1) / n >= q:
            return z
    return ordered[-1]


class ThresholdState:
    """Single-owner mutable state for one ego stream."""

    def __init__(self, params: ThresholdParams, epsilon0: float):
        if not 0.0 <= epsilon0 <= 1.0:
            raise ConfigError(f"initial threshold must lie in [0,1], got {epsilon0}")
        self.params = params
        self.epsilon = float(epsilon0)
        self.window_benign: deque[float] = deque(maxlen=params.window)
        self.window_contam: deque[float] = deque(maxlen=params.window)

    @property
    def warmed_up(self) -> bool:
        p = self.params
        return (len(self.window_benign) >= p.window_min
                and len(self.window_contam) >= p.window_min)

    def provisional(self) -> tuple[float, float, float] | None:
        """(benign quantile, contaminated quantile, midpoint), or None pre-warm-up."""
        if not self.warmed_up:
            return None
        p = self.params
        q_p = empirical_quantile(self.window_benign, 1.0 - p.alpha)
        q_n = empirical_quantile(self.window_contam, p.beta)
        return q_p, q_n, (q_p + q_n) / 2.0


def threshold_update(state: ThresholdState, score: float,
                     label: Verdict) -> ThresholdState:
    """Push one labeled score and move the threshold if both windows are warm."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score must lie in [0,1], got {score}")
    if label == Verdict.BENIGN:
        state.window_benign.append(float(score))
    else:
        state.window_contam.append(float(score))
    prov = state.provisional()
    if prov is not None:
        eta = state.params.eta
        eps = (1.0 - eta) * state.epsilon + eta * prov[2]
        state.epsilon = min(1.0, max(0.0, eps))
    return state


def classify(score: float, epsilon: float) -> Verdict:
    """Benign iff the score reaches the threshold (boundary counts as benign)."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score must lie in [0,1], got {score}")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0,1], got {epsilon}")
    return Verdict.BENIGN if score >= epsilon else Verdict.CONTAM


@dataclass(frozen=True)
class ThresholdTraceRow:
    step: int
    score: float
    label: Verdict
    q_p: float | None
    q_n: float | None
    eps_provisional: float | None
    eps: float


def update_with_trace(state: ThresholdState, step: int, score: float,
                      label: Verdict) -> ThresholdTraceRow:
    threshold_update(state, score, label)
    prov = state.provisional()
    if prov is None:
        return ThresholdTraceRow(step, score, label, None, None, None, state.epsilon)
    return ThresholdTraceRow(step, score, label, prov[0], prov[1], prov[2],
                             state.epsilon)
