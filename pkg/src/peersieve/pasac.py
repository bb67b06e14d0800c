"""Adaptive group testing over collaborators.

The core routine splits the collaborator set in half, queries each half, and
recurses only into halves the oracle calls contaminated: a clean verdict
accepts the whole half at once, a contaminated singleton convicts that agent.
With m attackers among n agents this needs at most 2m*ceil(log2 n) + (n - m)
queries, against n for a linear scan. Two baselines and the analytic bound
calculators live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .rng import make_rng
from .types import ConfigError, OracleVerdict, Verdict

Oracle = Callable[[Sequence[int]], OracleVerdict]


@dataclass(frozen=True)
class PasacConfig:
    """Run controls: benign quota, split stream, optional whole-set pre-test."""

    n_max: int | None = None
    split_seed: int = 0
    query_root: bool = False
    keep_trace: bool = True

    def __post_init__(self) -> None:
        if self.n_max is not None and self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")


@dataclass(frozen=True)
class TraceRecord:
    subset: tuple[int, ...]
    verdict: OracleVerdict
    depth: int


@dataclass(frozen=True)
class PasacResult:
    benign: frozenset[int]
    malicious: frozenset[int]
    queries: int
    trace: tuple[TraceRecord, ...]
    stopped_early: bool
    failed: bool = False


def ceil_log2(n: int) -> int:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return (n - 1).bit_length()


def query_bound(n: int, m: int) -> int:
    """Worst-case query count: 2m*ceil(log2 n) + (n - m).

    The log term is floored at 1 when m >= 1 so the bound also covers the
    single-collaborator case, where one query is always spent.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= m <= n:
        raise ValueError(f"m must be in [0, n], got {m}")
    if m == 0:
        return n
    return 2 * m * max(1, ceil_log2(n)) + (n - m)


def error_bound(alpha: float, beta: float, n: int, m: int) -> float:
    """Misclassification probability bound min(1, (alpha+beta)*m*ceil(log2 n))."""
    if not (0.0 <= alpha < 1.0 and 0.0 <= beta < 1.0):
        raise ValueError("alpha and beta must lie in [0, 1)")
    if n < 1 or not 0 <= m <= n:
        raise ValueError(f"invalid (n, m) = ({n}, {m})")
    return min(1.0, (alpha + beta) * m * ceil_log2(n))


def _split(subset: tuple[int, ...], rng) -> tuple[tuple[int, ...], tuple[int, ...]]:
    order = rng.permutation(len(subset))
    shuffled = [subset[int(i)] for i in order]
    cut = math.ceil(len(subset) / 2)
    return tuple(sorted(shuffled[:cut])), tuple(sorted(shuffled[cut:]))


def pasac_run(collaborators: Sequence[int], oracle: Oracle,
              config: PasacConfig) -> PasacResult:
    """Classify every collaborator, or stop once n_max benign peers are found."""
    ids = tuple(collaborators)
    if not ids:
        raise ValueError("collaborator set must be non-empty")
    if len(set(ids)) != len(ids):
        raise ValueError("collaborator ids must be unique")
    if config.n_max is not None and config.n_max > len(ids):
        raise ConfigError(f"n_max={config.n_max} exceeds {len(ids)} collaborators")

    rng = make_rng(config.split_seed)
    benign: set[int] = set()
    malicious: set[int] = set()
    trace: list[TraceRecord] = []
    queries = 0

    def ask(subset: tuple[int, ...], depth: int) -> Verdict:
        nonlocal queries
        verdict = oracle(subset)
        queries += 1
        if config.keep_trace:
            trace.append(TraceRecord(subset, verdict, depth))
        return verdict.label

    def quota_met() -> bool:
        return config.n_max is not None and len(benign) >= config.n_max

    stack: list[tuple[tuple[int, ...], int]] = []
    full = tuple(sorted(ids))
    if config.query_root and len(full) > 1 and ask(full, 0) == Verdict.BENIGN:
        return PasacResult(frozenset(full), frozenset(), queries, tuple(trace),
                           stopped_early=False)
    if len(full) == 1:
        stack.append((full, 1))
    else:
        left, right = _split(full, rng)
        stack.append((right, 1))
        stack.append((left, 1))

    stopped_early = False
    while stack:
        if quota_met():
            stopped_early = True
            break
        subset, depth = stack.pop()
        if ask(subset, depth) == Verdict.BENIGN:
            benign.update(subset)
            continue
        if len(subset) == 1:
            malicious.update(subset)
            continue
        left, right = _split(subset, rng)
        stack.append((right, depth + 1))
        stack.append((left, depth + 1))

    return PasacResult(frozenset(benign), frozenset(malicious), queries,
                       tuple(trace), stopped_early=stopped_early)


def linear_scan(collaborators: Sequence[int], oracle: Oracle,
                keep_trace: bool = True) -> PasacResult:
    """Query every collaborator individually, exactly once each."""
    ids = tuple(collaborators)
    if not ids:
        raise ValueError("collaborator set must be non-empty")
    benign: set[int] = set()
    malicious: set[int] = set()
    trace: list[TraceRecord] = []
    for agent in ids:
        verdict = oracle((agent,))
        if keep_trace:
            trace.append(TraceRecord((agent,), verdict, 0))
        (benign if verdict.label == Verdict.BENIGN else malicious).add(agent)
    return PasacResult(frozenset(benign), frozenset(malicious), len(ids),
                       tuple(trace), stopped_early=False)


def random_consensus(collaborators: Sequence[int], oracle: Oracle,
                     assumed_m: int, max_attempts: int, seed: int,
                     keep_trace: bool = True) -> PasacResult:
    """Draw random subsets of size n - assumed_m until one tests clean.

    Models a consensus baseline that knows the attacker count but not their
    identities; agents outside the winning subset stay unclassified.
    """
    ids = tuple(collaborators)
    if not ids:
        raise ValueError("collaborator set must be non-empty")
    if not 0 <= assumed_m < len(ids):
        raise ValueError(
            f"assumed_m must leave a non-empty subset, got {assumed_m} of {len(ids)}")
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    size = len(ids) - assumed_m
    rng = make_rng(seed)
    trace: list[TraceRecord] = []
    for attempt in range(1, max_attempts + 1):
        picked = rng.choice(len(ids), size=size, replace=False)
        subset = tuple(sorted(ids[int(i)] for i in picked))
        verdict = oracle(subset)
        if keep_trace:
            trace.append(TraceRecord(subset, verdict, 0))
        if verdict.label == Verdict.BENIGN:
            return PasacResult(frozenset(subset), frozenset(), attempt,
                               tuple(trace), stopped_early=False)
    return PasacResult(frozenset(), frozenset(), max_attempts, tuple(trace),
                       stopped_early=False, failed=True)
