"""Group-consistency tests.

Two interchangeable oracles answer "does this subset contain a malicious
agent": a synthetic Bernoulli oracle with exact false-positive rate alpha and
false-negative rate beta, and a score-backed oracle that fuses the subset's
outputs with the ego view and thresholds the consistency score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy.stats import truncnorm

from .consistency import CCLossParams, ccloss_det, ccloss_seg
from .rng import make_rng
from .scene import fuse_detections, fuse_segmaps
from .types import (
    ConfigError,
    DetectionSet,
    OracleVerdict,
    PerceptionOutput,
    SegGrid,
    Verdict,
)

EpsilonSource = float | Callable[[], float]


@dataclass(frozen=True)
class SyntheticOracleSpec:
    alpha: float
    beta: float
    truth: frozenset[int]

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha < 1.0 and 0.0 <= self.beta < 1.0):
            raise ConfigError("alpha and beta must lie in [0, 1)")
        if self.alpha + self.beta >= 1.0:
            raise ConfigError("alpha + beta must be < 1 for an informative oracle")
        object.__setattr__(self, "truth", frozenset(self.truth))


def _verdict_for(contaminated: bool, err: bool) -> Verdict:
    if contaminated:
        return Verdict.BENIGN if err else Verdict.CONTAM
    return Verdict.CONTAM if err else Verdict.BENIGN


class SyntheticOracle:
    """Stateful oracle: each call draws fresh noise and bumps the counter."""

    def __init__(self, spec: SyntheticOracleSpec, seed: int):
        self._spec = spec
        self._rng = make_rng(seed)
        self._count = 0

    @property
    def queries(self) -> int:
        return self._count

    def __call__(self, subset: Iterable[int]) -> OracleVerdict:
        members = set(subset)
        if not members:
            raise ValueError("cannot test an empty subset")
        self._count += 1
        contaminated = bool(members & self._spec.truth)
        err_rate = self._spec.beta if contaminated else self._spec.alpha
        err = bool(self._rng.uniform() < err_rate)
        return OracleVerdict(_verdict_for(contaminated, err),
                             query_index=self._count)


def synthetic_test(spec: SyntheticOracleSpec, subset: Iterable[int],
                   seed: int) -> OracleVerdict:
    """One-shot form of the synthetic oracle."""
    return SyntheticOracle(spec, seed)(subset)


@dataclass(frozen=True)
class ScoreDistributions:
    """Truncated-normal score models on [0,1] for benign and contaminated groups.

    sigma = 0 degenerates to a point mass at the mean.
    """

    benign_mean: float
    benign_sigma: float
    contam_mean: float
    contam_sigma: float

    def __post_init__(self) -> None:
        for name in ("benign_mean", "contam_mean"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0,1], got {v}")
        if self.benign_sigma < 0 or self.contam_sigma < 0:
            raise ConfigError("sigmas must be >= 0")

    def _params(self, contaminated: bool) -> tuple[float, float]:
        if contaminated:
            return self.contam_mean, self.contam_sigma
        return self.benign_mean, self.benign_sigma

    def sample(self, contaminated: bool, rng: np.random.Generator) -> float:
        mean, sigma = self._params(contaminated)
        if sigma == 0.0:
            return mean
        a = (0.0 - mean) / sigma
        b = (1.0 - mean) / sigma
        return float(truncnorm.rvs(a, b, loc=mean, scale=sigma, random_state=rng))

    def quantile(self, q: float, contaminated: bool) -> float:
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must be in (0,1), got {q}")
        mean, sigma = self._params(contaminated)
        if sigma == 0.0:
            return mean
        a = (0.0 - mean) / sigma
        b = (1.0 - mean) / sigma
        return float(truncnorm.ppf(q, a, b, loc=mean, scale=sigma))

    def separated(self, alpha: float, beta: float) -> bool:
        """The reliability precondition: benign (1-alpha)-quantile above the
        contaminated beta-quantile."""
        return self.quantile(1.0 - alpha, False) > self.quantile(beta, True)


def sample_score(dists: ScoreDistributions, contaminated: bool, seed: int) -> float:
    return dists.sample(contaminated, make_rng(seed))


def _resolve_epsilon(epsilon: EpsilonSource) -> float:
    value = epsilon() if callable(epsilon) else epsilon
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise ConfigError(f"threshold must lie in [0,1], got {value}")
    return value


def ccloss_test(ego_output: PerceptionOutput,
                group_outputs: Iterable[PerceptionOutput],
                params: CCLossParams,
                epsilon: EpsilonSource,
                merge_iou: float = 0.5,
                query_index: int = 1) -> OracleVerdict:
    """Fuse the group with the ego view, score the result, threshold it.

    For detections the score asks how much of the fused picture the ego view
    can account for: content contributed by the group that the ego cannot
    explain drives the score down, while a union that merely confirms the ego
    view scores 1. A collaborator that only withholds boxes is therefore
    invisible here (the union restores nothing to explain) -- an accepted
    limitation of output-space consistency checking.
    """
    eps = _resolve_epsilon(epsilon)
    group = list(group_outputs)
    if isinstance(ego_output, DetectionSet):
        if not all(isinstance(o, DetectionSet) for o in group):
            raise ConfigError("mixed output kinds in one test")
        fused = fuse_detections(ego_output, group, merge_iou=merge_iou)
        score = ccloss_det(fused, ego_output, params)
    elif isinstance(ego_output, SegGrid):
        if not all(isinstance(o, SegGrid) for o in group):
            raise ConfigError("mixed output kinds in one test")
        fused = fuse_segmaps(ego_output, group)
        score = ccloss_seg(ego_output, fused, params)
    else:
        raise ConfigError(f"unsupported output type {type(ego_output).__name__}")
    label = Verdict.BENIGN if score >= eps else Verdict.CONTAM
    return OracleVerdict(label, score=score, query_index=query_index)


class CCLossOracle:
    """Consistency-score oracle over a fixed frame of per-agent outputs.

    ``epsilon`` may be a float or a zero-argument callable read at each query,
    which lets an adaptive threshold steer the oracle mid-run.
    """

    def __init__(self, ego_output: PerceptionOutput,
                 outputs: Mapping[int, PerceptionOutput],
                 params: CCLossParams,
                 epsilon: EpsilonSource,
                 merge_iou: float = 0.5):
        self._ego = ego_output
        self._outputs = dict(outputs)
        self._params = params
        self._epsilon = epsilon
        self._merge_iou = merge_iou
        self._count = 0

    @property
    def queries(self) -> int:
        return self._count

    def __call__(self, subset: Iterable[int]) -> OracleVerdict:
        members = list(subset)
        if not members:
            raise ValueError("cannot test an empty subset")
        missing = [i for i in members if i not in self._outputs]
        if missing:
            raise ConfigError(f"no outputs for agents {missing}")
        self._count += 1
        return ccloss_test(
            self._ego,
            [self._outputs[i] for i in members],
            self._params,
            self._epsilon,
            merge_iou=self._merge_iou,
            query_index=self._count,
        )
